"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / (||a|| + ||n||)``, zero when both gradients vanish."""
    num = float(np.linalg.norm(np.ravel(analytic - numeric)))
    den = float(np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric)))
    if den == 0.0:
        return 0.0
    return num / den


def numerical_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5):
    out = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat, gflat = t.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def analytic_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor]):
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


@dataclass
class GradCheckResult:
    max_rel_error: float
    errors: dict

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5,
                    names: Sequence[str] | None = None) -> GradCheckResult:
    """Compare tape gradients of the scalar ``fn()`` with central differences."""
    names = list(names) if names is not None else [t.name or f"t{i}" for i, t in enumerate(tensors)]
    ana = analytic_gradients(fn, tensors)
    num = numerical_gradients(fn, tensors, h)
    errors = {n: relative_error(a, b) for n, a, b in zip(names, ana, num)}
    return GradCheckResult(max(errors.values(), default=0.0), errors)
