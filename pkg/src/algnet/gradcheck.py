"""Finite-difference check of the full model on a toy instance."""
from __future__ import annotations

from .config import TrainConfig
from .ehr import build_ehr_adjacency, ddi_from_pairs
from .model import ALGNet, group_of
from .optim import GradCheckReport, grad_check
from .synth import SynthConfig, synth_generate

TOY_SYNTH = SynthConfig(patients=3, n_diag=8, n_proc=5, n_med=6, max_visits=3, min_visits=2,
                        diag_per_visit=(1, 3), meds_per_diag=(1, 2), proc_per_visit=(1, 2),
                        noise=0.1, n_ddi=3)


def toy_model(seed: int = 7, variant: str = "ALGNET", **overrides) -> tuple[ALGNet, list]:
    """Three patients, 8/5/6 codes, dim 8, two heads; every loss term active."""
    corpus = synth_generate(TOY_SYNTH, seed)
    n_med = TOY_SYNTH.n_med
    settings = dict(dim=8, heads=2, seed=seed, variant=variant, theta0=0.5, theta1=0.5, w_ddi=0.1, epochs=1)
    settings.update(overrides)
    config = TrainConfig(**settings)
    model = ALGNet(config, TOY_SYNTH.n_diag, TOY_SYNTH.n_proc, n_med,
                   build_ehr_adjacency(corpus.records, n_med).matrix,
                   ddi_from_pairs(corpus.ddi_pairs, n_med).matrix)
    return model, corpus.records


def model_closure(model: ALGNet, records):
    def closure():
        memory = model.memory_graph()
        total = None
        for r in records:
            loss, _, _ = model.patient_loss(r, memory=memory)
            total = loss if total is None else total + loss
        return total

    return closure


def run_gradcheck(seed: int = 7, variant: str = "ALGNET", eps: float = 1e-4,
                  tolerance: float = 1e-4) -> tuple[GradCheckReport, dict[str, float]]:
    model, records = toy_model(seed, variant)
    report = grad_check(model_closure(model, records), model.params, eps=eps,
                        tolerance=tolerance, names=model.active_param_names())
    return report, report.grouped(group_of)
