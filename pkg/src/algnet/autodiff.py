"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every forward op records its parents and a closure mapping the output
gradient to parent gradients. The graph is rebuilt on each forward pass,
so variable-length structures (per-patient visit histories) need no
special handling.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

_grad_enabled = True
_reduce_sum = np.add.reduce


class NonFiniteError(FloatingPointError):
    """Raised when a forward op produces NaN or Inf."""


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check(data: np.ndarray, op: str) -> np.ndarray:
    # a NaN/Inf anywhere makes the sum non-finite
    if not math.isfinite(_reduce_sum(data, axis=None)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    return data


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        self.data = _check(arr, "constructor")
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def sum(self, axis: int | None = None) -> Tensor:
        return sum_(self, axis)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __getitem__(self, idx) -> Tensor:
        return index(self, idx)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str,
          check: bool = True) -> Tensor:
    # ops that only move or squash already-checked finite values pass check=False
    out = Tensor.__new__(Tensor)
    out.data = _check(data, op) if check else data
    out.name = None
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# elementwise -----------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg", check=False)


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid", check=False)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh", check=False)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu", check=False)


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis (each row of a matrix, or a whole vector)."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (x,), backward, "softmax", check=False)


softmax_rows = softmax


# structural ------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D/2-D operands (vectors act as row or column)."""
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {ad.shape} @ {bd.shape}")
    out = ad @ bd
    if ad.ndim == 1 and bd.ndim == 1:
        out = np.asarray(out)

    def backward(g):
        a2 = ad if ad.ndim == 2 else ad[None, :]
        b2 = bd if bd.ndim == 2 else bd[:, None]
        g2 = np.reshape(g, (a2.shape[0], b2.shape[1]))
        ga = (g2 @ b2.T).reshape(ad.shape) if a.requires_grad else None
        gb = (a2.T @ g2).reshape(bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product of (n, p, k) and (n, k, q) tensors."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm: incompatible shapes {a.shape} and {b.shape}")
    ad_, bd = a.data, b.data

    def backward(g):
        ga = g @ bd.transpose(0, 2, 1) if a.requires_grad else None
        gb = ad_.transpose(0, 2, 1) @ g if b.requires_grad else None
        return ga, gb

    return _make(ad_ @ bd, (a, b), backward, "bmm")


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(sorted(range(len(axes)), key=axes.__getitem__))
    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (g.transpose(inv),), "permute", check=False)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose", check=False)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape).copy(), (a,), lambda g: (g.reshape(src),), "reshape", check=False)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    src = a.shape
    if axis is None:
        return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.full(src, float(g)),), "sum")

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), src).copy(),)

    return _make(a.data.sum(axis=axis), (a,), backward, "sum")


def index(a: Tensor, idx) -> Tensor:
    src = a.shape

    def backward(g):
        full = np.zeros(src)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(a.data[idx], dtype=np.float64), (a,), backward, "index", check=False)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat of nothing")
    nd = parts[0].ndim
    for p in parts:
        if p.ndim != nd:
            raise ShapeError(f"concat: rank mismatch {[q.shape for q in parts]}")
        other = [s for i, s in enumerate(p.shape) if i != axis % nd]
        ref = [s for i, s in enumerate(parts[0].shape) if i != axis % nd]
        if other != ref:
            raise ShapeError(f"concat: shapes {[q.shape for q in parts]} disagree off axis {axis}")
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, backward, "concat", check=False)


def stack(parts: Sequence[Tensor]) -> Tensor:
    """Stack equal-shaped tensors along a new leading axis."""
    parts = [_lift(p) for p in parts]
    for p in parts[1:]:
        _same_shape(parts[0], p, "stack")

    def backward(g):
        return tuple(g[i] for i in range(len(parts)))

    return _make(np.stack([p.data for p in parts]), parts, backward, "stack", check=False)


def embedding_sum(table: Tensor, indices: Iterable[int]) -> Tensor:
    """Sum of the selected rows of ``table``; gradient lands on those rows only."""
    idx = np.asarray(sorted(indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for table with {table.shape[0]} rows")
    src = table.shape

    def backward(g):
        full = np.zeros(src)
        np.add.at(full, idx, g)
        return (full,)

    out = table.data[idx].sum(axis=0) if idx.size else np.zeros(src[1])
    return _make(out, (table,), backward, "embedding_sum")


def multihead_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> tuple[Tensor, np.ndarray]:
    """Scaled dot-product attention over ``heads`` column blocks, fused.

    ``q`` is (tq, heads*dk), ``k`` and ``v`` are (t, heads*dk). Head h uses
    columns h*dk:(h+1)*dk and scales scores by 1/sqrt(dk). Returns the
    concatenated head outputs (tq, heads*dk) and the attention weights
    (heads, tq, t) as a plain array.
    """
    if q.ndim != 2 or k.shape != v.shape or k.ndim != 2 or q.shape[1] != k.shape[1] or k.shape[1] % heads:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape}, heads {heads}")
    tq, width = q.shape
    t = k.shape[0]
    dk = width // heads
    c = 1.0 / math.sqrt(dk)
    qh = q.data.reshape(tq, heads, dk).transpose(1, 0, 2)
    kh = k.data.reshape(t, heads, dk).transpose(1, 0, 2)
    vh = v.data.reshape(t, heads, dk).transpose(1, 0, 2)
    scores = (qh @ kh.transpose(0, 2, 1)) * c
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    out = (w @ vh).transpose(1, 0, 2).reshape(tq, width)

    def backward(g):
        gh = g.reshape(tq, heads, dk).transpose(1, 0, 2)
        gw = gh @ vh.transpose(0, 2, 1)
        gs = w * (gw - (gw * w).sum(axis=-1, keepdims=True)) * c
        gq = (gs @ kh).transpose(1, 0, 2).reshape(tq, width)
        gk = (gs.transpose(0, 2, 1) @ qh).transpose(1, 0, 2).reshape(t, width)
        gv = (w.transpose(0, 2, 1) @ gh).transpose(1, 0, 2).reshape(t, width)
        return gq, gk, gv

    return _make(out, (q, k, v), backward, "attention"), w


def bce_with_logits(z: Tensor, y) -> Tensor:
    """Summed binary cross-entropy of targets ``y`` under probabilities sigmoid(z)."""
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeError(f"bce: shape mismatch {z.shape} vs {y.shape}")
    d = z.data
    loss = np.maximum(d, 0.0) - d * y + np.log1p(np.exp(-np.abs(d)))
    e = np.exp(-np.abs(d))
    sig = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(np.asarray(loss.sum()), (z,), lambda g: (float(g) * (sig - y),), "bce")


# reverse pass ----------------------------------------------------------
def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Propagate d(loss)/d(node) to every tracked node.

    Returns a mapping from ``id(tensor)`` to gradient for the leaves that
    require grad. Use :meth:`ParamStore.gradients` to get a by-name view
    with zeros for parameters the loss never touched.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    leaves: dict[int, np.ndarray] = {}
    if not loss.requires_grad:
        return leaves
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaves[id(node)] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves
