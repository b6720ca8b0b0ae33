"""Multi-label recommendation metrics over (patient, visit) predictions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

METRIC_KEYS = ("ddi_rate", "jaccard", "f1", "pr_auc", "avg_drugs", "avg_p", "avg_r")


@dataclass(frozen=True)
class VisitEval:
    truth: frozenset[int]
    probs: np.ndarray
    threshold: float = 0.5

    @property
    def predicted(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.probs > self.threshold).tolist())


def visit_jaccard(truth, pred) -> float:
    union = len(truth | pred)
    return 1.0 if union == 0 else len(truth & pred) / union


def visit_prf(truth, pred) -> tuple[float, float, float]:
    hit = len(truth & pred)
    p = hit / len(pred) if pred else 0.0
    r = hit / len(truth) if truth else 0.0
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def average_precision(truth, scores: np.ndarray) -> float:
    """Sum over distinct score thresholds (descending) of precision times
    the recall gained at that threshold. Tied scores enter together."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.zeros(scores.shape[0], dtype=bool)
    pos[list(truth)] = True
    n_pos = pos.sum()
    if n_pos == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], pos[order]
    tp = np.cumsum(y)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp_at = tp[ends]
    precision = tp_at / (ends + 1)
    recall = tp_at / n_pos
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(precision * gain))


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def jaccard(evals: Sequence[VisitEval]) -> float:
    return _mean(visit_jaccard(e.truth, e.predicted) for e in evals)


def f1(evals: Sequence[VisitEval]) -> float:
    return _mean(visit_prf(e.truth, e.predicted)[2] for e in evals)


def avg_precision_recall(evals: Sequence[VisitEval]) -> tuple[float, float]:
    prf = [visit_prf(e.truth, e.predicted) for e in evals]
    return _mean(p for p, _, _ in prf), _mean(r for _, r, _ in prf)


def pr_auc(evals: Sequence[VisitEval]) -> float:
    return _mean(average_precision(e.truth, e.probs) for e in evals)


def ddi_rate(evals: Sequence[VisitEval], ddi: np.ndarray) -> float:
    """Fraction of predicted unordered medication pairs that are DDI edges."""
    bad = total = 0
    for e in evals:
        pred = sorted(e.predicted)
        k = len(pred)
        if k < 2:
            continue
        sub = ddi[np.ix_(pred, pred)]
        bad += int(np.triu(sub, 1).sum())
        total += k * (k - 1) // 2
    return bad / total if total else 0.0


def avg_drugs(evals: Sequence[VisitEval]) -> float:
    return _mean(len(e.predicted) for e in evals)


def compute_metrics(evals: Sequence[VisitEval], ddi: np.ndarray) -> dict[str, float]:
    p, r = avg_precision_recall(evals)
    return {
        "ddi_rate": ddi_rate(evals, ddi),
        "jaccard": jaccard(evals),
        "f1": f1(evals),
        "pr_auc": pr_auc(evals),
        "avg_drugs": avg_drugs(evals),
        "avg_p": p,
        "avg_r": r,
    }


def metrics_report(per_patient: Sequence[Sequence[VisitEval]], ddi: np.ndarray,
                   rounds: int = 10, seed: int = 0) -> dict:
    """Point metrics on all visits plus mean/std over patient bootstrap rounds."""
    flat = [e for visits in per_patient for e in visits]
    point = compute_metrics(flat, ddi)
    rng = np.random.default_rng(seed)
    boot = {k: [] for k in METRIC_KEYS}
    n = len(per_patient)
    for _ in range(rounds if n else 0):
        pick = rng.integers(0, n, size=n)
        sample = [e for i in pick for e in per_patient[i]]
        for k, v in compute_metrics(sample, ddi).items():
            boot[k].append(v)
    report = {
        k: {
            "value": point[k],
            "mean": float(np.mean(boot[k])) if boot[k] else point[k],
            "std": float(np.std(boot[k])) if boot[k] else 0.0,
        }
        for k in METRIC_KEYS
    }
    report["n_patients"] = n
    report["n_visits"] = len(flat)
    report["bootstrap"] = {"rounds": rounds, "seed": seed, "spread": "std over patient resamples"}
    return report
