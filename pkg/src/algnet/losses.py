"""Training objectives for one visit; callers sum them over visits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class LossWeights:
    theta0: float = 0.95
    theta1: float = 0.05
    w_ddi: float = 0.0

    def __post_init__(self):
        if self.theta0 < 0 or self.theta1 < 0 or abs(self.theta0 + self.theta1 - 1.0) > 1e-9:
            raise ValueError(f"theta0/theta1 must be nonnegative and sum to 1, got {self.theta0}, {self.theta1}")
        if self.w_ddi < 0:
            raise ValueError("w_ddi must be nonnegative")


def loss_bce(logits: Tensor, y) -> Tensor:
    return ad.bce_with_logits(logits, y)


def loss_mll(probs: Tensor, truth: Iterable[int], threshold: float = 0.5) -> Tensor:
    """Hinge between every predicted label and every label, normalized by
    |truth| * n_labels. Zero when nothing crosses the threshold."""
    n = probs.shape[0]
    truth = set(truth)
    picked = np.flatnonzero(probs.data > threshold)
    if picked.size == 0 or not truth:
        return Tensor(0.0)
    k = picked.size
    sel = probs[picked].reshape(k, 1) @ Tensor(np.ones((1, n)))
    rest = Tensor(np.ones((k, 1))) @ probs.reshape(1, n)
    hinge = ad.relu(Tensor(np.ones((k, n))) - (sel - rest))
    return hinge.sum() * (1.0 / (len(truth) * n))


def loss_interaction(probs: Tensor, ddi: np.ndarray) -> Tensor:
    """sum_ij A_ij p_i p_j."""
    return probs @ (Tensor(ddi) @ probs)


def loss_total(bce: Tensor, mll: Tensor, weights: LossWeights, interaction: Tensor | None = None) -> Tensor:
    total = bce * weights.theta0 + mll * weights.theta1
    if weights.w_ddi > 0:
        if interaction is None:
            raise ValueError("w_ddi > 0 requires the interaction loss")
        total = total + interaction * weights.w_ddi
    return total
