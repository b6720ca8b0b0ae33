"""Training loop, evaluation and the ablation grid."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .config import TrainConfig, Variant
from .ehr import PatientRecord, build_ehr_adjacency, split_dataset
from .metrics import VisitEval, compute_metrics, ddi_rate, metrics_report
from .model import ALGNet
from .optim import Adam

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class Dataset:
    train: list[PatientRecord]
    validation: list[PatientRecord]
    test: list[PatientRecord]
    n_diag: int
    n_proc: int
    n_med: int
    ddi: np.ndarray

    @classmethod
    def from_records(cls, records, sizes, ddi: np.ndarray, seed: int,
                     ratios=(2 / 3, 1 / 6, 1 / 6)) -> Dataset:
        train, val, test = split_dataset(records, seed, tuple(ratios))
        return cls(train, val, test, *sizes, np.asarray(ddi, dtype=np.float64))

    def ehr_adjacency(self) -> np.ndarray:
        # training visits only, so held-out prescriptions never leak into the graph
        return build_ehr_adjacency(self.train, self.n_med).matrix


@dataclass
class RunLog:
    config: dict
    seed: int
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_jaccard: float = -1.0
    steps: int = 0
    test: dict | None = None

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_jaccard": self.best_val_jaccard,
            "steps": self.steps,
            "test": self.test,
        }

    def epochs_csv(self) -> str:
        if not self.epochs:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.epochs[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.epochs)
        return buf.getvalue()


def collect_evals(model: ALGNet, records: Sequence[PatientRecord]) -> list[list[VisitEval]]:
    thr = model.config.threshold
    out = []
    for r in records:
        probs = model.predict_patient(r)
        out.append([VisitEval(v.m, p, thr) for v, p in zip(r.visits, probs)])
    return out


def evaluate(model: ALGNet, records: Sequence[PatientRecord], rounds: int | None = None,
             seed: int | None = None) -> dict:
    """Metrics report (point value + bootstrap mean/std) on ``records``."""
    c = model.config
    per_patient = collect_evals(model, records)
    return metrics_report(per_patient, model.ddi_adj,
                          rounds=c.bootstrap_rounds if rounds is None else rounds,
                          seed=c.seed if seed is None else seed)


def quick_metrics(model: ALGNet, records: Sequence[PatientRecord]) -> dict[str, float]:
    flat = [e for visits in collect_evals(model, records) for e in visits]
    return compute_metrics(flat, model.ddi_adj)


def _prefix_loss_last(model: ALGNet, record: PatientRecord):
    outs = model.forward_patient(record)
    loss, comp = model.visit_losses(record.visits[-1], outs[-1], model.loss_weights())
    return loss, comp, outs


def _step(model: ALGNet, opt: Adam, record: PatientRecord, index: int, last_only: bool = False):
    try:
        if last_only:
            loss, parts, outs = _prefix_loss_last(model, record)
        else:
            loss, parts, outs = model.patient_loss(record)
        grads = model.params.gradients(loss)
    except ad.NonFiniteError as e:
        raise TrainingError(f"non-finite value for training patient #{index} "
                            f"({record.patient_id}): {e}") from e
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for {name} at training patient #{index} "
                                f"({record.patient_id})")
    opt.step(grads)
    return parts, outs


def train(config: TrainConfig, data: Dataset, model: ALGNet | None = None) -> tuple[ALGNet, RunLog]:
    """Per-patient Adam training with best-validation-Jaccard selection.

    Each epoch visits the training patients in a seeded random order. For
    every patient the visited history starts empty, every visit is predicted
    with the ground truth fed back into the history, and the summed
    per-visit loss drives one optimizer step (or one per visit with
    ``step_per="visit"``).
    """
    if model is None:
        model = ALGNet(config, data.n_diag, data.n_proc, data.n_med, data.ehr_adjacency(), data.ddi)
    opt = Adam(model.params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 2])
    runlog = RunLog(config=config.to_json(), seed=config.seed)
    best_state = model.params.state_dict()

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        totals = {"bce": 0.0, "mll": 0.0, "ddi": 0.0}
        train_evals = []
        n_visits = 0
        for index in rng.permutation(len(data.train)):
            record = data.train[index]
            if config.step_per == "patient":
                parts, outs = _step(model, opt, record, int(index))
            else:
                parts = {k: 0.0 for k in totals}
                outs = []
                for t in range(1, len(record.visits) + 1):
                    prefix = PatientRecord(record.patient_id, record.visits[:t])
                    sub_parts, sub_outs = _step(model, opt, prefix, int(index), last_only=True)
                    for k in parts:
                        parts[k] += sub_parts[k]
                    outs.append(sub_outs[-1])
            for k in totals:
                totals[k] += parts[k]
            n_visits += len(record.visits)
            # per-patient DDI rate is monitored, never optimized
            train_evals.extend(VisitEval(v.m, o.probs.data, config.threshold)
                               for v, o in zip(record.visits, outs))
        runlog.steps = opt.state.step

        val = quick_metrics(model, data.validation) if data.validation else {}
        row = {
            "epoch": epoch,
            "loss": (config.theta0 * totals["bce"] + config.theta1 * totals["mll"]
                     + config.w_ddi * totals["ddi"]) / max(n_visits, 1),
            "bce": totals["bce"] / max(n_visits, 1),
            "mll": totals["mll"] / max(n_visits, 1),
            "ddi_loss": totals["ddi"] / max(n_visits, 1),
            "train_ddi_rate": ddi_rate(train_evals, model.ddi_adj),
        }
        for k in ("jaccard", "f1", "pr_auc", "ddi_rate", "avg_drugs"):
            row[f"val_{k}"] = val.get(k, float("nan"))
        runlog.epochs.append(row)
        if val and val["jaccard"] > runlog.best_val_jaccard:
            runlog.best_val_jaccard = val["jaccard"]
            runlog.best_epoch = epoch
            best_state = model.params.state_dict()
        elif not val:
            best_state = model.params.state_dict()
            runlog.best_epoch = epoch
        log.info("epoch %d loss %.4f val_jaccard %.4f (%.1fs)", epoch, row["loss"],
                 row["val_jaccard"], time.perf_counter() - started)

    model.params.load_state_dict(best_state)
    if data.test:
        runlog.test = evaluate(model, data.test)
    return model, runlog


DEFAULT_GRID = tuple(Variant)


def ablate(base: TrainConfig, records, sizes, ddi: np.ndarray, variants: Sequence[str] = DEFAULT_GRID,
           seeds: Sequence[int] = (0,)) -> list[dict]:
    """Train each variant on each seed; one row per variant with mean/std of
    the test metrics across seeds."""
    parsed = [Variant.parse(v) if isinstance(v, str) else v for v in variants]
    rows = []
    for variant in parsed:
        per_seed = []
        for seed in seeds:
            cfg = base.updated(variant=variant.value, seed=int(seed))
            data = Dataset.from_records(records, sizes, ddi, cfg.seed, cfg.split)
            model, runlog = train(cfg, data)
            per_seed.append({k: runlog.test[k]["value"] for k in ("ddi_rate", "jaccard", "pr_auc", "f1")})
        row = {"variant": variant.value, "label": variant.label}
        for k in ("ddi_rate", "jaccard", "pr_auc", "f1"):
            vals = [s[k] for s in per_seed]
            row[k] = float(np.mean(vals))
            row[f"{k}_std"] = float(np.std(vals))
        row["seeds"] = list(map(int, seeds))
        row["per_seed_jaccard"] = [s["jaccard"] for s in per_seed]
        rows.append(row)
    return rows


def ablation_markdown(rows: Sequence[dict]) -> str:
    lines = ["| Model | DDI Rate | Jaccard | PR-AUC | F1 Score |", "|---|---|---|---|---|"]
    for r in rows:
        cells = [f"{r[k]:.4f} ± {r[k + '_std']:.4f}" for k in ("ddi_rate", "jaccard", "pr_auc", "f1")]
        lines.append(f"| {r['label']} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def ablation_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    cols = ["variant", "ddi_rate", "ddi_rate_std", "jaccard", "jaccard_std",
            "pr_auc", "pr_auc_std", "f1", "f1_std"]
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
