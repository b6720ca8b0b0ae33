import numpy as np
import pytest

from algnet.autodiff import Tensor, backward, no_grad


def numeric_grad(f, arrays, eps=1e-5):
    """Central differences of scalar f(*arrays) w.r.t. each array (in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gf = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f(*arrays)
            flat[i] = orig - eps
            down = f(*arrays)
            flat[i] = orig
            gf[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_op_gradient(build, arrays, eps=1e-5, tol=1e-4, weights_seed=0):
    """Gradient of sum(w * build(*tensors)) against central differences.

    A fixed random weighting makes every output entry matter.
    """
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*leaves)
    w = np.random.default_rng(weights_seed).uniform(-1, 1, out.shape)
    loss = (out * Tensor(w)).sum()
    leaf_grads = backward(loss)
    analytic = [leaf_grads.get(id(t), np.zeros_like(t.data)) for t in leaves]

    def f(*arrs):
        with no_grad():
            o = build(*[Tensor(a) for a in arrs])
        return float((o.data * w).sum())

    numeric = numeric_grad(f, [a.copy() for a in arrays], eps)
    for a, n in zip(analytic, numeric):
        assert rel_err(a, n, floor=1e-6) < tol


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def tiny_corpus(patients=12, noise=0.1, seed=0):
    from algnet.ehr import ddi_from_pairs
    from algnet.synth import SynthConfig, synth_generate

    cfg = SynthConfig(patients=patients, n_diag=8, n_proc=5, n_med=6, max_visits=3,
                      meds_per_diag=(1, 2), n_ddi=3, noise=noise)
    corpus = synth_generate(cfg, seed)
    return corpus, ddi_from_pairs(corpus.ddi_pairs, cfg.n_med).matrix


def tiny_config(**overrides):
    from algnet.config import TrainConfig

    settings = dict(dim=8, heads=2, epochs=2, lr=1e-2, bootstrap_rounds=3)
    settings.update(overrides)
    return TrainConfig(**settings)


def tiny_data(config, patients=12, noise=0.1, seed=0):
    from algnet.train import Dataset

    corpus, ddi = tiny_corpus(patients, noise, seed)
    return corpus, Dataset.from_records(corpus.records, corpus.vocab.sizes(), ddi, config.seed, config.split)


def tiny_model(variant="ALGNET", seed=0, **overrides):
    from algnet.ehr import build_ehr_adjacency
    from algnet.model import ALGNet

    corpus, ddi = tiny_corpus()
    config = tiny_config(variant=variant, seed=seed, **overrides)
    n_diag, n_proc, n_med = corpus.vocab.sizes()
    model = ALGNet(config, n_diag, n_proc, n_med, build_ehr_adjacency(corpus.records, n_med).matrix, ddi)
    return model, corpus
