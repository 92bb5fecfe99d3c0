"""Differentiable operations on :class:`Tensor`.

Shapes must match exactly; the only implicit broadcast is a Python number or a
0-d tensor on the right-hand side of an elementwise op.  Row-wise helpers
(``scale_rows``, ``add_bias``) are the explicit exceptions the model needs.
"""
from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, as_tensor, make_result


class ShapeError(ValueError):
    pass


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    return g if g.shape == shape else np.asarray(g.sum()).reshape(shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def vjp(g):
        return g @ B.T, A.T @ g

    return make_result(A @ B, (a, b), vjp)


def linear(x: Tensor, w: Tensor) -> Tensor:
    """``x @ w.T`` for ``x: n x d_in`` and ``w: d_out x d_in``.

    Each output row depends only on its input row (no BLAS blocking), so
    permuting the rows of ``x`` permutes the result bit-for-bit.
    """
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} and {w.shape}")
    X, Wd = x.data, w.data

    def vjp(g):
        return g @ Wd, g.T @ X

    return make_result(np.einsum("ij,kj->ik", X, Wd, optimize=False), (x, w), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.shape}")
    return make_result(x.data.T.copy(), (x,), lambda g: (g.T,))


def elementwise(op: str, a, b) -> Tensor:
    """Pointwise ``add``, ``sub`` or ``mul``; ``b`` may be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 0 or a.ndim == 0:
        _same_shape(a, b, op)
    A, B = a.data, b.data
    if op == "add":
        out = A + B

        def vjp(g):
            return g, _reduce_to(g, B.shape)
    elif op == "sub":
        out = A - B

        def vjp(g):
            return g, _reduce_to(-g, B.shape)
    elif op == "mul":
        out = A * B

        def vjp(g):
            return g * B, _reduce_to(g * A, B.shape)
    else:
        raise ValueError(f"unknown elementwise op {op!r}")
    return make_result(out, (a, b), vjp)


def add(a, b) -> Tensor:
    return elementwise("add", a, b)


def sub(a, b) -> Tensor:
    return elementwise("sub", a, b)


def mul(a, b) -> Tensor:
    return elementwise("mul", a, b)


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_result(x.data * c, (x,), lambda g: (g * c,))


def circular_correlation(a: Tensor, b: Tensor) -> Tensor:
    """``out[..., k] = sum_i a[..., i] * b[..., (i + k) % d]`` along the last axis.

    The sum over ``i`` is accumulated in increasing order, so the result is
    bit-identical to the plain double loop.
    """
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "circular_correlation")
    if a.ndim == 0 or a.shape[-1] < 1:
        raise ShapeError("circular_correlation needs a non-empty last axis")
    A, B = a.data, b.data
    d = A.shape[-1]
    out = np.zeros_like(A)
    for i in range(d):
        # np.roll(B, -i)[..., k] == B[..., (k + i) % d]
        out += A[..., i:i + 1] * np.roll(B, -i, axis=-1)

    def vjp(g):
        ga = np.zeros_like(A)
        gb = np.zeros_like(B)
        for k in range(d):
            # d out[k] / d a[i] = b[(i + k) % d]
            ga += g[..., k:k + 1] * np.roll(B, -k, axis=-1)
            # d out[k] / d b[j] = a[(j - k) % d]
            gb += g[..., k:k + 1] * np.roll(A, k, axis=-1)
        return ga, gb

    return make_result(out, (a, b), vjp)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"tanh": tanh, "relu": relu, "identity": identity}


def activation(kind: str, x: Tensor) -> Tensor:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)`` at train time."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def gather_rows(x: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return make_result(x.data[idx], (x,), vjp)


def scatter_add_rows(x: Tensor, index, num_rows: int) -> Tensor:
    """Sum rows of ``x`` into ``num_rows`` buckets; rows are added in array order."""
    idx = np.asarray(index, dtype=np.int64)
    if len(idx) != x.shape[0]:
        raise ShapeError(f"scatter_add_rows: {len(idx)} indices for {x.shape[0]} rows")
    out = np.zeros((num_rows,) + x.shape[1:])
    np.add.at(out, idx, x.data)
    return make_result(out, (x,), lambda g: (g[idx],))


def scale_rows(x: Tensor, s) -> Tensor:
    """Multiply row ``i`` of ``x`` by the scalar ``s[i]``."""
    s = as_tensor(s)
    if s.ndim != 1 or s.shape[0] != x.shape[0]:
        raise ShapeError(f"scale_rows: {s.shape} scalars for rows of {x.shape}")
    S = s.data.reshape((-1,) + (1,) * (x.ndim - 1))
    X = x.data

    def vjp(g):
        return g * S, (g * X).reshape(g.shape[0], -1).sum(axis=1)

    return make_result(X * S, (x, s), vjp)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if x.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeError(f"add_bias: bias {b.shape} for matrix {x.shape}")
    return make_result(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return make_result(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return make_result(np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def segment_mean(x: Tensor, segments, num_segments: int) -> Tensor:
    """Mean of the rows of ``x`` belonging to each segment.

    Uses correctly rounded summation, so the result does not depend on the
    order of rows within a segment.
    """
    seg = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("segment_mean: empty segment")
    X = x.data.reshape(x.shape[0], -1)
    out = np.empty((num_segments, X.shape[1]))
    order = np.argsort(seg, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(counts.astype(np.int64))])
    for k in range(num_segments):
        rows = X[order[bounds[k]:bounds[k + 1]]]
        for j in range(X.shape[1]):
            out[k, j] = math.fsum(rows[:, j]) / counts[k]
    out = out.reshape((num_segments,) + x.shape[1:])

    def vjp(g):
        return ((g / counts.reshape((-1,) + (1,) * (g.ndim - 1)))[seg],)

    return make_result(out, (x,), vjp)


def pairwise_l1(q: Tensor, h: Tensor) -> Tensor:
    """``out[b, n] = sum_i |q[b, i] - h[n, i]|``."""
    if q.ndim != 2 or h.ndim != 2 or q.shape[1] != h.shape[1]:
        raise ShapeError(f"pairwise_l1: shapes {q.shape} and {h.shape}")
    diff = q.data[:, None, :] - h.data[None, :, :]
    sign = np.sign(diff)

    def vjp(g):
        w = g[:, :, None] * sign
        return w.sum(axis=1), -w.sum(axis=0)

    return make_result(np.abs(diff).sum(axis=2), (q, h), vjp)


def pairwise_l2(q: Tensor, h: Tensor) -> Tensor:
    """Euclidean distance between every row of ``q`` and every row of ``h``.

    The gradient at zero distance is taken as zero.
    """
    if q.ndim != 2 or h.ndim != 2 or q.shape[1] != h.shape[1]:
        raise ShapeError(f"pairwise_l2: shapes {q.shape} and {h.shape}")
    diff = q.data[:, None, :] - h.data[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    safe = np.where(dist > 0, dist, 1.0)

    def vjp(g):
        w = (g / safe)[:, :, None] * diff
        w[dist == 0] = 0.0
        return w.sum(axis=1), -w.sum(axis=0)

    return make_result(dist, (q, h), vjp)


def bce_with_label_smoothing(logits: Tensor, targets, eps: float = 0.1) -> Tensor:
    """Mean binary cross-entropy against smoothed targets.

    Targets become ``(1 - eps) * y + eps / n`` with ``n`` the size of the last
    axis (the candidate dimension).  Uses ``softplus(l) - y' * l`` for stability.
    """
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"bce: logits {logits.shape} vs targets {y.shape}")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"label smoothing eps must be in [0, 1), got {eps}")
    L = logits.data
    if not np.all(np.isfinite(L)):
        raise FloatingPointError("non-finite logits in bce_with_label_smoothing")
    n = L.shape[-1] if L.ndim else 1
    ys = (1.0 - eps) * y + eps / n
    loss = np.mean(np.logaddexp(0.0, L) - ys * L)
    count = L.size

    def vjp(g):
        sig = np.exp(-np.logaddexp(0.0, -L))
        return (float(g) * (sig - ys) / count,)

    return make_result(np.asarray(loss), (logits,), vjp)


def smoothed_targets(targets, eps: float) -> np.ndarray:
    y = np.asarray(targets, dtype=np.float64)
    return (1.0 - eps) * y + eps / y.shape[-1]


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    lab = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or lab.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape}, labels {lab.shape}")
    L = logits.data
    if not np.all(np.isfinite(L)):
        raise FloatingPointError("non-finite logits in softmax_cross_entropy")
    shifted = L - L.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(lab))
    loss = np.mean(logz - shifted[rows, lab])
    n = len(lab)

    def vjp(g):
        p = np.exp(shifted - logz[:, None])
        p[rows, lab] -= 1.0
        return (float(g) * p / n,)

    return make_result(np.asarray(loss), (logits,), vjp)
