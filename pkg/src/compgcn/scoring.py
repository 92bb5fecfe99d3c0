"""Decoders over encoded states and the 1-N link-prediction loss."""
from __future__ import annotations

import enum

import numpy as np

from .numeric import ops
from .numeric.tensor import Tensor


class ScoreFn(str, enum.Enum):
    TRANSE = "transe"
    DISTMULT = "distmult"


def score(fn, h_s: Tensor, h_r: Tensor, h_o: Tensor, norm: int = 1) -> Tensor:
    """Plausibility of a single triple; higher is better for both decoders.

    TransE is the negative ``L1`` (or ``L2``) distance ``-|h_s + h_r - h_o|``;
    DistMult is the trilinear product ``sum(h_s * h_r * h_o)``.
    """
    fn = ScoreFn(fn)
    if not (h_s.shape == h_r.shape == h_o.shape):
        raise ops.ShapeError(f"score: {h_s.shape}, {h_r.shape}, {h_o.shape}")
    if fn is ScoreFn.DISTMULT:
        return ops.sum_all(ops.mul(ops.mul(h_s, h_r), h_o))
    q = ops.reshape(ops.add(h_s, h_r), (1, -1))
    o = ops.reshape(h_o, (1, -1))
    dist = ops.pairwise_l1(q, o) if norm == 1 else ops.pairwise_l2(q, o)
    return ops.neg(ops.reshape(dist, ()))


def score_all_objects(fn, h_s: Tensor, h_r: Tensor, H: Tensor, norm: int = 1) -> Tensor:
    """Score every entity row of ``H`` as the object of ``(h_s, h_r)``.

    Accepts a single query (vectors) or a batch (``b x d`` matrices) and returns
    ``(n,)`` or ``(b, n)`` accordingly.
    """
    fn = ScoreFn(fn)
    single = h_s.ndim == 1
    if single:
        h_s = ops.reshape(h_s, (1, -1))
        h_r = ops.reshape(h_r, (1, -1))
    if h_s.shape != h_r.shape or h_s.shape[1] != H.shape[1]:
        raise ops.ShapeError(f"score_all_objects: {h_s.shape}, {h_r.shape}, {H.shape}")
    if fn is ScoreFn.DISTMULT:
        out = ops.matmul(ops.mul(h_s, h_r), ops.transpose(H))
    else:
        q = ops.add(h_s, h_r)
        dist = ops.pairwise_l1(q, H) if norm == 1 else ops.pairwise_l2(q, H)
        out = ops.neg(dist)
    if single:
        out = ops.reshape(out, (H.shape[0],))
    return out


def multi_hot(label_sets, keys, num_entities: int) -> np.ndarray:
    """Binary target matrix: row ``i`` marks every known object of ``keys[i]``."""
    y = np.zeros((len(keys), num_entities))
    for i, key in enumerate(keys):
        y[i, label_sets[key]] = 1.0
    return y


def link_prediction_loss(fn, node_states: Tensor, rel_states: Tensor, queries, targets,
                         eps: float = 0.1, norm: int = 1) -> Tensor:
    """Mean smoothed BCE of 1-N scores for a batch of ``(entity, relation)`` queries.

    Inverse-direction queries carry the inverse relation id, so ``(o, r + R)``
    predicts subjects with the encoder's own inverse-relation state.
    """
    q = np.asarray(queries, dtype=np.int64).reshape(-1, 2)
    if len(q) == 0:
        raise ValueError("empty batch")
    if q[:, 1].min() < 0 or q[:, 1].max() >= rel_states.shape[0]:
        raise ValueError("query relation id out of range")
    h_s = ops.gather_rows(node_states, q[:, 0])
    h_r = ops.gather_rows(rel_states, q[:, 1])
    logits = score_all_objects(fn, h_s, h_r, node_states, norm)
    return ops.bce_with_label_smoothing(logits, targets, eps)
