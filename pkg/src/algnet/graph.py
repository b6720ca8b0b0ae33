"""Light graph convolution over medication graphs and the memory graph."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def normalize_adjacency(a: np.ndarray, self_loops: bool = False) -> np.ndarray:
    """D^-1/2 A D^-1/2; rows and columns of degree-0 nodes stay zero."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if self_loops:
        a = a + np.eye(a.shape[0])
    deg = a.sum(axis=1)
    denom = np.sqrt(np.outer(deg, deg))
    return np.divide(a, denom, out=np.zeros_like(a), where=denom > 0)


def lgc_propagate(norm_adj, e0: Tensor, layers: int = 2) -> list[Tensor]:
    """Return [E1, ..., E_layers] with E_{k+1} = norm_adj @ E_k."""
    norm = norm_adj if isinstance(norm_adj, Tensor) else Tensor(norm_adj)
    if norm.shape[1] != e0.shape[0]:
        raise ShapeError(f"lgc_propagate: adjacency {norm.shape} vs embedding {e0.shape}")
    out, e = [], e0
    for _ in range(layers):
        e = norm @ e
        out.append(e)
    return out


def combine_layers(layers: Sequence[Tensor], alpha: float, e0: Tensor | None = None) -> Tensor:
    """alpha * sum of layer outputs; ``e0`` (if given) is included with the same weight."""
    parts = list(layers) if e0 is None else [e0, *layers]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total * alpha


def build_memory_graph(e_ehr: Tensor, e_ddi: Tensor, beta: float) -> Tensor:
    if e_ehr.shape != e_ddi.shape:
        raise ShapeError(f"memory graph: {e_ehr.shape} vs {e_ddi.shape}")
    return e_ehr + e_ddi * beta


def gcn_propagate(norm_adj, e: Tensor, weights: Sequence[Tensor]) -> Tensor:
    """Standard GCN stack: E_{k+1} = relu(norm_adj @ E_k @ W_k).

    ``norm_adj`` should already include self-loops
    (``normalize_adjacency(a, self_loops=True)``).
    """
    norm = norm_adj if isinstance(norm_adj, Tensor) else Tensor(norm_adj)
    for w in weights:
        if w.shape[0] != e.shape[1]:
            raise ShapeError(f"gcn_propagate: weight {w.shape} vs embedding {e.shape}")
        e = ad.relu(norm @ (e @ w))
    return e
