"""Visited-history memory, memory readouts and the prediction head."""
from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


class VisitedHistory:
    """Keys are past patient states, values the medication multi-hots."""

    def __init__(self, dim: int, n_med: int):
        self.dim = dim
        self.n_med = n_med
        self.keys: list[Tensor] = []
        self.values: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.keys)

    def reset(self) -> None:
        self.keys.clear()
        self.values.clear()

    def insert(self, a: Tensor, meds: np.ndarray) -> None:
        meds = np.asarray(meds, dtype=np.float64)
        if a.shape != (self.dim,) or meds.shape != (self.n_med,):
            raise ShapeError(f"history insert: key {a.shape}, value {meds.shape}")
        if not np.all((meds == 0) | (meds == 1)):
            raise ValueError("history values must be multi-hot")
        self.keys.append(a)
        self.values.append(meds)


def read_memory_bank(memory: Tensor, a: Tensor) -> Tensor:
    """Attend over medication rows of the memory graph: M^T softmax(M a)."""
    return ad.softmax(memory @ a) @ memory


def read_dynamic_memory(memory: Tensor, history: VisitedHistory, a: Tensor) -> Tensor:
    """M^T H_v^T softmax(H_k a); exactly zero when the history is empty."""
    if len(history) == 0:
        return Tensor(np.zeros(memory.shape[1]))
    w = ad.softmax(ad.stack(history.keys) @ a)
    drug_weights = w @ Tensor(np.stack(history.values))
    return drug_weights @ memory


def init_head(rng: np.random.Generator, dim: int, n_med: int) -> dict[str, np.ndarray]:
    bound = 1.0 / math.sqrt(dim)
    return {"w": rng.uniform(-bound, bound, (3 * dim, n_med)), "b": np.zeros(n_med)}


def predict(a: Tensor, o_b: Tensor, o_d: Tensor, p: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Return (logits, probabilities) for every medication."""
    logits = ad.concat([a, o_b, o_d]) @ p["w"] + p["b"]
    return logits, ad.sigmoid(logits)
