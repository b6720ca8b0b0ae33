"""Named parameter storage, Adam, and a finite-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .autodiff import Tensor, backward, no_grad


class ParamStore:
    """Insertion-ordered mapping of parameter name to leaf Tensor."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def size(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def gradients(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Backpropagate ``loss``; unreachable parameters get zero gradient."""
        leaf = backward(loss)
        return {
            name: leaf.get(id(p), np.zeros_like(p.data))
            for name, p in self._params.items()
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")
        for name, p in self._params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    def __init__(self, params: ParamStore, lr: float = 2e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self._live: set[str] = set()
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        s = self.state
        missing = [n for n in self.params if n not in grads]
        if missing:
            raise KeyError(f"no gradient for parameters: {missing}")
        s.step += 1
        c1 = 1.0 - s.beta1 ** s.step
        c2 = 1.0 - s.beta2 ** s.step
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != {p.shape}")
            if name not in self._live:
                # zero moments and zero gradient give an exactly-zero update
                if not g.any():
                    continue
                self._live.add(name)
            m = s.m[name]
            v = s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            p.data = p.data - s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float

    @property
    def failures(self) -> dict[str, float]:
        return {k: e for k, e in self.errors.items() if not e < self.tolerance}

    @property
    def ok(self) -> bool:
        return not self.failures

    def grouped(self, group_of: Callable[[str], str]) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, err in self.errors.items():
            g = group_of(name)
            out[g] = max(out.get(g, 0.0), err)
        return out


def grad_check(closure: Callable[[], Tensor], params: ParamStore, eps: float = 1e-5,
               tolerance: float = 1e-4, names: list[str] | None = None,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Per entry the relative error is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps entries whose true gradient is ~0 from dividing roundoff
    by roundoff. The report holds the max over entries per parameter.
    """
    analytic = params.gradients(closure())
    errors: dict[str, float] = {}
    for name in names if names is not None else params.names():
        p = params[name]
        flat = p.data.reshape(-1)
        a = analytic[name].reshape(-1)
        worst = 0.0
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = closure().item()
                flat[i] = orig - eps
                down = closure().item()
                flat[i] = orig
                num = (up - down) / (2.0 * eps)
                err = abs(a[i] - num) / max(abs(a[i]), abs(num), floor)
                worst = max(worst, err)
        errors[name] = worst
    return GradCheckReport(errors, tolerance)
