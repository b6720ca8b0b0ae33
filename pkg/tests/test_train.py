import json

import numpy as np
import pytest

from algnet.config import TrainConfig, Variant
from algnet.ehr import PatientRecord, build_ehr_adjacency, ddi_from_pairs
from algnet.model import ALGNet
from algnet.synth import SynthConfig, synth_generate
from algnet.train import (Dataset, TrainingError, ablate, ablation_csv, ablation_markdown,
                          evaluate, train)

from conftest import tiny_config, tiny_corpus, tiny_data


def oracle_model(corpus, cfg: SynthConfig) -> ALGNet:
    """Hand-set parameters that reproduce the planted rule exactly.

    Diagnosis embeddings are one-hot (dim = n_diag); the GRU update gate is
    saturated open and the candidate is tanh(3 x), so the diagnosis state is
    ~0.995 on present diagnoses and 0 elsewhere. Attention output and the
    procedure branch are zeroed, the fusion copies the diagnosis half, and
    the head fires medication j when any present diagnosis plants it.
    """
    n = cfg.n_diag
    config = TrainConfig(dim=n, heads=1, variant="ALGNET", epochs=1, bootstrap_rounds=0)
    model = ALGNet(config, cfg.n_diag, cfg.n_proc, cfg.n_med,
                   build_ehr_adjacency(corpus.records, cfg.n_med).matrix,
                   ddi_from_pairs(corpus.ddi_pairs, cfg.n_med).matrix)
    for name, p in model.params.items():
        p.data = np.zeros_like(p.data)
    P = model.params
    P["emb.diag"].data = np.eye(n)
    for mod in ("diag", "proc"):
        b = np.zeros(3 * n)
        b[:n] = 50.0
        P[f"gru.{mod}.b"].data = b
    wx = np.zeros((n, 3 * n))
    wx[:, 2 * n:] = 3.0 * np.eye(n)
    P["gru.diag.wx"].data = wx
    w = np.zeros((2 * n, n))
    w[:n] = 3.0 * np.eye(n)
    P["fuse.w"].data = w
    head = np.zeros((3 * n, cfg.n_med))
    for d, meds in enumerate(corpus.planted):
        head[d, sorted(meds)] = 10.0
    P["head.w"].data = head
    P["head.b"].data = np.full(cfg.n_med, -5.0)
    return model


class TestEvaluate:
    def test_oracle_parameters_reach_planted_rule(self):
        cfg = SynthConfig(patients=60, noise=0.0)
        corpus = synth_generate(cfg, seed=1)
        report = evaluate(oracle_model(corpus, cfg), corpus.records)
        assert report["jaccard"]["value"] >= 0.95

    def test_untrained_metrics_in_range_and_repeatable(self):
        config = tiny_config()
        corpus, data = tiny_data(config)
        model = ALGNet(config, *corpus.vocab.sizes(), data.ehr_adjacency(), data.ddi)
        first = evaluate(model, data.test)
        assert first == evaluate(model, data.test)
        for k in ("jaccard", "f1", "pr_auc", "ddi_rate"):
            assert 0.0 <= first[k]["value"] <= 1.0
            assert first[k]["std"] >= 0.0


class TestTrain:
    def test_single_visit_single_step(self):
        corpus, ddi = tiny_corpus()
        record = PatientRecord("solo", corpus.records[0].visits[:1])
        data = Dataset([record], [], [], 8, 5, 6, ddi)
        config = tiny_config(epochs=1)
        model, log = train(config, data)
        assert log.steps == 1 and len(log.epochs) == 1 and log.test is None
        assert not model.forward_patient(record)[0].o_d.data.any()

    def test_per_visit_stepping(self):
        corpus, ddi = tiny_corpus()
        data = Dataset(corpus.records[:3], [], [], 8, 5, 6, ddi)
        _, log = train(tiny_config(epochs=1, step_per="visit"), data)
        assert log.steps == sum(len(r.visits) for r in corpus.records[:3])

    def test_loss_decreases(self):
        config = tiny_config(epochs=5, lr=5e-3)
        _, data = tiny_data(config, patients=30, noise=0.0)
        _, log = train(config, data)
        assert log.epochs[4]["loss"] < log.epochs[0]["loss"]

    def test_deterministic(self):
        config = tiny_config(epochs=2)
        runs = []
        for _ in range(2):
            _, data = tiny_data(config)
            model, log = train(config, data)
            runs.append((json.dumps(log.to_json(), sort_keys=True),
                         b"".join(v.tobytes() for v in model.params.state_dict().values())))
        assert runs[0] == runs[1]

    def test_best_validation_state_restored(self):
        config = tiny_config(epochs=3)
        _, data = tiny_data(config)
        model, log = train(config, data)
        best = max(e["val_jaccard"] for e in log.epochs)
        assert log.best_val_jaccard == best
        assert log.epochs[log.best_epoch - 1]["val_jaccard"] == best
        from algnet.train import quick_metrics
        assert quick_metrics(model, data.validation)["jaccard"] == best

    def test_runlog_csv(self):
        config = tiny_config(epochs=2)
        _, data = tiny_data(config)
        _, log = train(config, data)
        lines = log.epochs_csv().splitlines()
        assert len(lines) == 3 and lines[0].startswith("epoch,loss,bce,mll")
        assert {"config", "seed", "best_epoch", "test"} <= set(log.to_json())

    def test_non_finite_aborts_with_patient_index(self):
        config = tiny_config(epochs=1)
        corpus, data = tiny_data(config)
        model = ALGNet(config, *corpus.vocab.sizes(), data.ehr_adjacency(), data.ddi)
        model.params["fuse.b"].data = np.full(8, np.nan)
        with pytest.raises(TrainingError, match=r"training patient #\d+ \(SYN\d+\)"):
            train(config, data, model)


class TestAblate:
    def test_full_grid(self):
        corpus, ddi = tiny_corpus()
        rows = ablate(tiny_config(epochs=1, dim=4, heads=1), corpus.records, corpus.vocab.sizes(), ddi,
                      seeds=(0, 1))
        assert [r["variant"] for r in rows] == [v.value for v in Variant]
        for r in rows:
            assert len(r["per_seed_jaccard"]) == 2
            assert r["jaccard"] == pytest.approx(np.mean(r["per_seed_jaccard"]))
        md = ablation_markdown(rows).splitlines()
        assert md[0] == "| Model | DDI Rate | Jaccard | PR-AUC | F1 Score |"
        assert len(md) == 12 and "RNN-GCN (GAMENet)" in md[7]
        assert len(ablation_csv(rows).splitlines()) == 11

    def test_unknown_variant(self):
        from algnet.config import ConfigError
        corpus, ddi = tiny_corpus()
        with pytest.raises(ConfigError):
            ablate(tiny_config(), corpus.records, corpus.vocab.sizes(), ddi, variants=["BOGUS"])
