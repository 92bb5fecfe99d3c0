"""Finite-difference gradient suite over every numeric op and the full model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import augment, train_label_sets
from .model import Composition, CompGCNModel, ModelConfig, encode
from .numeric import ops
from .numeric.gradcheck import check_gradients
from .numeric.tensor import Tensor
from .scoring import link_prediction_loss, multi_hot
from .synthetic import random_kg


@dataclass
class CheckRecord:
    name: str
    max_rel_error: float


def _t(rng, *shape):
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


def _weighted_sum(out: Tensor, w: np.ndarray) -> Tensor:
    # Random upstream weights so every output element gets a distinct cotangent.
    return ops.sum_all(ops.mul(out, Tensor(w)))


def op_cases():
    """``name -> build(rng)``; ``build`` returns ``(scalar fn, input tensors)``."""
    n, d, m = 3, 4, 5
    idx = np.array([2, 0, 2, 1, 0])

    def unary(op, in_shape=(n, d), out_shape=(n, d)):
        def build(rng):
            x = _t(rng, *in_shape)
            w = rng.normal(size=out_shape)
            return lambda: _weighted_sum(op(x), w), [x]
        return build

    def binary(op, shape_a=(n, d), shape_b=(n, d), out_shape=(n, d)):
        def build(rng):
            a, b = _t(rng, *shape_a), _t(rng, *shape_b)
            w = rng.normal(size=out_shape)
            return lambda: _weighted_sum(op(a, b), w), [a, b]
        return build

    def bce(rng):
        x = _t(rng, n, m)
        y = (rng.random((n, m)) < 0.4).astype(float)
        return lambda: ops.bce_with_label_smoothing(x, y, 0.1), [x]

    def xent(rng):
        x = _t(rng, n, m)
        y = rng.integers(m, size=n)
        return lambda: ops.softmax_cross_entropy(x, y), [x]

    def reduce(op):
        def build(rng):
            x = _t(rng, n, d)
            w = rng.normal(size=(n, d))
            return lambda: op(ops.mul(x, Tensor(w))), [x]
        return build

    return {
        "add": binary(ops.add),
        "sub": binary(ops.sub),
        "mul": binary(ops.mul),
        "mul_scalar": binary(ops.mul, (n, d), ()),
        "neg": unary(ops.neg),
        "scale": unary(lambda x: ops.scale(x, -1.7)),
        "matmul": binary(ops.matmul, (n, d), (d, m), (n, m)),
        "linear": binary(ops.linear, (n, d), (m, d), (n, m)),
        "transpose": unary(ops.transpose, (n, d), (d, n)),
        "reshape": unary(lambda x: ops.reshape(x, (d, n)), (n, d), (d, n)),
        "circular_correlation": binary(ops.circular_correlation),
        "tanh": unary(ops.tanh),
        "relu": unary(ops.relu),
        "identity": unary(ops.identity),
        "gather_rows": unary(lambda x: ops.gather_rows(x, idx), (n, d), (len(idx), d)),
        "scatter_add_rows": unary(lambda x: ops.scatter_add_rows(x, idx, n), (len(idx), d), (n, d)),
        "segment_mean": unary(lambda x: ops.segment_mean(x, idx, n), (len(idx), d), (n, d)),
        "scale_rows": binary(ops.scale_rows, (n, d), (n,)),
        "add_bias": binary(ops.add_bias, (n, d), (d,)),
        "sum_all": reduce(ops.sum_all),
        "mean_all": reduce(ops.mean_all),
        "pairwise_l1": binary(ops.pairwise_l1, (n, d), (m, d), (n, m)),
        "pairwise_l2": binary(ops.pairwise_l2, (n, d), (m, d), (n, m)),
        "bce_with_label_smoothing": bce,
        "softmax_cross_entropy": xent,
    }


def check_ops(seed: int = 0, trials: int = 20, h: float = 1e-5) -> list[CheckRecord]:
    """Worst relative error of every op over ``trials`` random inputs."""
    rng = np.random.default_rng(seed)
    out = []
    for name, build in op_cases().items():
        worst = 0.0
        for _ in range(trials):
            fn, tensors = build(rng)
            worst = max(worst, check_gradients(fn, tensors, h).max_rel_error)
        out.append(CheckRecord(name, worst))
    return out


def check_pipeline(composition: str, seed: int = 0, num_entities: int = 6, num_relations: int = 3,
                   dims=(4, 4, 4), score_fn: str = "distmult", basis: int | None = None,
                   h: float = 1e-5) -> CheckRecord:
    """Gradient of the 1-N loss through encoder and decoder w.r.t. every parameter."""
    rng = np.random.default_rng(seed)
    g = random_kg(num_entities, num_relations, 12, seed=seed, valid_frac=0.0, test_frac=0.0)
    ag = augment(g)
    model = CompGCNModel(ModelConfig(dims=list(dims), composition=composition, basis=basis),
                         g.num_entities, ag.aug_relation_count, rng)
    labels = train_label_sets(g)
    keys = list(labels)
    targets = multi_hot(labels, keys, g.num_entities)
    params = model.trainable()

    def fn():
        H, Z = encode(model, ag)
        return link_prediction_loss(score_fn, H, Z, keys, targets, 0.1)

    res = check_gradients(fn, list(params.values()), h, names=list(params))
    tag = f"{composition},{score_fn}" + (f",B={basis}" if basis else "")
    return CheckRecord(f"pipeline[{tag}]", res.max_rel_error)


def run_suite(seed: int = 0, trials: int = 20) -> list[CheckRecord]:
    records = check_ops(seed, trials)
    for comp in (Composition.SUB, Composition.MULT, Composition.CORR):
        records.append(check_pipeline(comp.value, seed))
    records.append(check_pipeline("corr", seed, score_fn="transe"))
    records.append(check_pipeline("mult", seed, basis=3))
    return records
