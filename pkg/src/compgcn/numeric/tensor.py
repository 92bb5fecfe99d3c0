"""Dense float64 tensors with a reverse-mode tape.

Operations record themselves on the innermost active :class:`Tape` whenever at
least one input requires a gradient.  Outside a tape nothing is recorded, which
is how evaluation runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager; operations executed inside are recorded in
    execution order, so every record's inputs precede it.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], vjp) -> None:
        self.records.append(_Record(output, inputs, vjp))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def make_result(data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap ``data`` as an op output and record it when any input needs gradients."""
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = track
    out.grad = None
    out.name = None
    if track:
        tape.record(out, inputs, vjp)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring it.

    Records are walked once in reverse order.  Gradients are added to whatever
    ``.grad`` already holds, so running twice without zeroing doubles them.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss is not on the tape (no input requires grad)")
    produced = {id(rec.output) for rec in tape.records}
    pending: dict[int, list] = {id(loss): [loss, np.ones_like(loss.data)]}
    for rec in reversed(tape.records):
        entry = pending.pop(id(rec.output), None)
        if entry is None:
            continue
        grads = rec.vjp(entry[1])
        for inp, g in zip(rec.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            slot = pending.get(id(inp))
            if slot is None:
                pending[id(inp)] = [inp, np.array(g, dtype=np.float64)]
            else:
                slot[1] = slot[1] + g
    for key, (t, g) in pending.items():
        if key in produced:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g
