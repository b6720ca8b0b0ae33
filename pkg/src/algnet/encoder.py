"""Patient representation: visit embeddings, self-attention, recurrent
branch, their weighted sum, and the diagnosis/procedure fusion."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def init_attention(rng: np.random.Generator, dim: int, heads: int) -> dict[str, np.ndarray]:
    bound = 1.0 / math.sqrt(dim)
    model = dim * heads
    u = lambda *s: rng.uniform(-bound, bound, s)  # noqa: E731
    return {
        "wq": u(dim, model),
        "wk": u(dim, model),
        "wv": u(dim, model),
        "wo": u(model, dim),
        "wl": u(dim, dim),
        "bl": np.zeros(dim),
    }


def embed_visits(table: Tensor, code_sets: Sequence[frozenset[int]]) -> list[Tensor]:
    out = []
    for codes in code_sets:
        if not codes:
            raise ValueError("empty code set")
        out.append(ad.embedding_sum(table, codes))
    return out


def attend(q: Tensor, k: Tensor, v: Tensor, heads: int) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention for all heads at once.

    ``q`` is (tq, heads*dk), ``k``/``v`` are (t, heads*dk). Returns the
    concatenated head outputs (tq, heads*dk) and the weights (heads, tq, t).
    """
    out, weights = ad.multihead_attention(q, k, v, heads)
    return out, Tensor(weights)


def attention_output(heads_out: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """Project concatenated heads with W^O, then the linear layer back to
    ``dim`` (bias excluded; it is added once after pooling)."""
    return (heads_out @ p["wo"]) @ p["wl"]


class AttentionCache:
    """Per-visit query/key/value rows, projected one visit at a time so a
    prefix of visits always produces bit-identical rows."""

    def __init__(self, p: Mapping[str, Tensor], heads: int):
        self.p = p
        self.heads = heads
        self.q: list[Tensor] = []
        self.k: list[Tensor] = []
        self.v: list[Tensor] = []

    def push(self, x: Tensor) -> None:
        self.q.append(x @ self.p["wq"])
        self.k.append(x @ self.p["wk"])
        self.v.append(x @ self.p["wv"])

    def read(self, pooling: str = "last") -> tuple[Tensor, Tensor]:
        """Output for the current (latest) visit over all cached visits."""
        k, v = ad.stack(self.k), ad.stack(self.v)
        if pooling == "last":
            q = self.q[-1].reshape(1, k.shape[1])
        elif pooling == "mean":
            q = ad.stack(self.q)
        else:
            raise ValueError(f"unknown pooling {pooling!r}")
        heads_out, weights = attend(q, k, v, self.heads)
        out = attention_output(heads_out, self.p)
        s = out[-1] if pooling == "last" else out.sum(axis=0) * (1.0 / out.shape[0])
        return s + self.p["bl"], weights


def mhsa_forward(seq: Sequence[Tensor], p: Mapping[str, Tensor], heads: int,
                 pooling: str = "last", return_weights: bool = False):
    """Multi-head self-attention over a visit sequence, pooled to one vector."""
    if len(seq) == 0:
        raise ValueError("mhsa_forward needs at least one visit")
    cache = AttentionCache(p, heads)
    for x in seq:
        cache.push(x)
    s, w = cache.read(pooling)
    return (s, w) if return_weights else s


def pre_combine(l: Tensor | None, s: Tensor | None, gamma: float) -> Tensor:
    """l + gamma * s, with either branch optional (ablation variants)."""
    if l is None and s is None:
        raise ValueError("at least one branch is required")
    if s is None:
        return l
    if l is None:
        return s * gamma
    return l + s * gamma


def init_fusion(rng: np.random.Generator, dim: int) -> dict[str, np.ndarray]:
    bound = 1.0 / math.sqrt(dim)
    return {"w": rng.uniform(-bound, bound, (2 * dim, dim)), "b": np.zeros(dim)}


def fuse_patient_state(pre_d: Tensor, pre_p: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    return ad.tanh(ad.concat([pre_d, pre_p]) @ p["w"] + p["b"])
