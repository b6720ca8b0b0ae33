"""GRU and LSTM cells built from autodiff ops.

Parameter layout (``x @ W`` convention, hidden size ``d``):

GRU:  wx (in, 3d) for [z | r | candidate], uzr (d, 2d), un (d, d), b (3d)
LSTM: wx (in, 4d), wh (d, 4d), b (4d) for [input | forget | cell | output]
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def init_gru(rng: np.random.Generator, dim: int, in_dim: int | None = None) -> dict[str, np.ndarray]:
    in_dim = dim if in_dim is None else in_dim
    bound = 1.0 / np.sqrt(dim)
    return {
        "wx": rng.uniform(-bound, bound, (in_dim, 3 * dim)),
        "uzr": rng.uniform(-bound, bound, (dim, 2 * dim)),
        "un": rng.uniform(-bound, bound, (dim, dim)),
        "b": np.zeros(3 * dim),
    }


def init_lstm(rng: np.random.Generator, dim: int, in_dim: int | None = None) -> dict[str, np.ndarray]:
    in_dim = dim if in_dim is None else in_dim
    bound = 1.0 / np.sqrt(dim)
    return {
        "wx": rng.uniform(-bound, bound, (in_dim, 4 * dim)),
        "wh": rng.uniform(-bound, bound, (dim, 4 * dim)),
        "b": np.zeros(4 * dim),
    }


def gru_cell(x: Tensor, h: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """One GRU step: h' = (1 - z) * h + z * tanh(W x + U (r * h) + b)."""
    d = h.shape[0]
    if p["uzr"].shape != (d, 2 * d) or x.shape[0] != p["wx"].shape[0]:
        raise ShapeError(f"gru_cell: x {x.shape}, h {h.shape} incompatible with params")
    xw = x @ p["wx"] + p["b"]
    zr = ad.sigmoid(xw[: 2 * d] + h @ p["uzr"])
    z, r = zr[:d], zr[d:]
    cand = ad.tanh(xw[2 * d:] + (r * h) @ p["un"])
    return h + z * (cand - h)


def lstm_cell(x: Tensor, state: tuple[Tensor, Tensor], p: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    h, c = state
    d = h.shape[0]
    if p["wh"].shape != (d, 4 * d) or x.shape[0] != p["wx"].shape[0]:
        raise ShapeError(f"lstm_cell: x {x.shape}, h {h.shape} incompatible with params")
    pre = x @ p["wx"] + h @ p["wh"] + p["b"]
    gates = ad.sigmoid(pre[: 2 * d])
    i, f = gates[:d], gates[d:]
    g = ad.tanh(pre[2 * d: 3 * d])
    o = ad.sigmoid(pre[3 * d:])
    c_new = f * c + i * g
    return o * ad.tanh(c_new), c_new


def gru_states(seq: Sequence[Tensor], p: Mapping[str, Tensor]) -> list[Tensor]:
    """Hidden state after each prefix of ``seq``, starting from zero."""
    d = p["un"].shape[0]
    h = Tensor(np.zeros(d))
    out = []
    for x in seq:
        h = gru_cell(x, h, p)
        out.append(h)
    return out


def lstm_states(seq: Sequence[Tensor], p: Mapping[str, Tensor]) -> list[Tensor]:
    d = p["wh"].shape[0]
    state = (Tensor(np.zeros(d)), Tensor(np.zeros(d)))
    out = []
    for x in seq:
        state = lstm_cell(x, state, p)
        out.append(state[0])
    return out


def gru_forward(seq: Sequence[Tensor], p: Mapping[str, Tensor]) -> Tensor:
    return gru_states(seq, p)[-1]


def lstm_forward(seq: Sequence[Tensor], p: Mapping[str, Tensor]) -> Tensor:
    return lstm_states(seq, p)[-1]
