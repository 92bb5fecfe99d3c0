"""Composition-based multi-relational graph convolution.

A layer composes each neighbour's state with the state of the connecting
(augmented) relation, routes the composed message through a weight chosen by
the edge's direction class, sums the messages arriving at every node and applies
dropout and the nonlinearity.  Relation states are carried to the next layer by
a separate linear map.

Besides the default direction-routed weights, a layer can share one weight for
all edges or use one weight per relation, and can scale messages by a learned
per-relation scalar.  Together with the ``first`` composition these settings
reproduce the classic relational GCN variants (see :func:`reduction_preset`).
"""
from __future__ import annotations

import enum
import weakref
from dataclasses import asdict, dataclass

import numpy as np

from .graph import AugmentedGraph, Direction
from .numeric import ops
from .numeric.optim import xavier_init
from .numeric.tensor import Tensor


class Composition(str, enum.Enum):
    SUB = "sub"
    MULT = "mult"
    CORR = "corr"
    # Ignores the relation: phi(h_u, h_r) = h_u.  Used by the reduction presets.
    FIRST = "first"


NORM_MODES = ("none", "in_degree", "symmetric")
WEIGHT_MODES = ("direction", "shared", "relation")
PRESETS = ("kipf", "relational", "directed", "weighted")


def compose(op, e_s: Tensor, e_r: Tensor) -> Tensor:
    op = Composition(op)
    if e_s.shape != e_r.shape:
        raise ops.ShapeError(f"compose: {e_s.shape} vs {e_r.shape}")
    if op is Composition.SUB:
        return ops.sub(e_s, e_r)
    if op is Composition.MULT:
        return ops.mul(e_s, e_r)
    if op is Composition.CORR:
        return ops.circular_correlation(e_s, e_r)
    return e_s


@dataclass
class ModelConfig:
    dims: list[int]
    composition: str = "mult"
    norm_mode: str = "none"
    basis: int | None = None
    dropout: float = 0.0
    activation: str = "tanh"
    weight_mode: str = "direction"
    relation_scalars: bool = False
    preset: str | None = None

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        if not self.dims or min(self.dims) < 1:
            raise ValueError("dims must be a non-empty list of positive sizes")
        self.composition = Composition(self.composition).value
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.basis is not None and self.basis < 1:
            raise ValueError("basis must be >= 1 or None")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.activation not in ops.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")

    @property
    def num_layers(self) -> int:
        return len(self.dims) - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K"] = self.num_layers
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = {k: v for k, v in d.items() if k != "K"}
        return cls(**d)


def reduction_preset(kind: str, dims, **overrides) -> ModelConfig:
    """Configuration under which the layer reduces to an earlier GCN variant.

    ``kipf``        one shared weight, phi = h_u, symmetric normalisation
    ``relational``  one weight per relation, phi = h_u, per-relation mean
    ``directed``    direction-specific weights, phi = h_u
    ``weighted``    one shared weight, phi = alpha_r * h_u, symmetric normalisation
    """
    table = {
        "kipf": dict(weight_mode="shared", norm_mode="symmetric"),
        "relational": dict(weight_mode="relation", norm_mode="in_degree"),
        "directed": dict(weight_mode="direction", norm_mode="none"),
        "weighted": dict(weight_mode="shared", norm_mode="symmetric", relation_scalars=True),
    }
    if kind not in table:
        raise ValueError(f"unknown preset {kind!r}; expected one of {PRESETS}")
    kw = dict(composition="first", activation="tanh", preset=kind)
    kw.update(table[kind])
    kw.update(overrides)
    return ModelConfig(dims=list(dims), **kw)


@dataclass
class LayerParams:
    """Weights of one layer, all stored as ``d_out x d_in`` matrices."""

    W_rel: Tensor
    W_O: Tensor | None = None
    W_I: Tensor | None = None
    W_S: Tensor | None = None
    W: Tensor | None = None
    W_r: list[Tensor] | None = None
    alpha: Tensor | None = None
    dropout: float = 0.0
    activation: str = "tanh"

    @property
    def weight_mode(self) -> str:
        if self.W_r is not None:
            return "relation"
        if self.W is not None:
            return "shared"
        return "direction"

    def named_tensors(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for key in ("W_O", "W_I", "W_S", "W", "W_rel", "alpha"):
            t = getattr(self, key)
            if t is not None:
                out[prefix + key] = t
        if self.W_r is not None:
            for i, t in enumerate(self.W_r):
                out[f"{prefix}W_r.{i}"] = t
        return out

    @classmethod
    def init(cls, d_in, d_out, num_relations, rng, weight_mode="direction",
             relation_scalars=False, dropout=0.0, activation="tanh") -> "LayerParams":
        p = cls(W_rel=xavier_init((d_out, d_in), rng), dropout=dropout, activation=activation)
        if weight_mode == "direction":
            p.W_O = xavier_init((d_out, d_in), rng)
            p.W_I = xavier_init((d_out, d_in), rng)
            p.W_S = xavier_init((d_out, d_in), rng)
        elif weight_mode == "shared":
            p.W = xavier_init((d_out, d_in), rng)
        elif weight_mode == "relation":
            p.W_r = [xavier_init((d_out, d_in), rng) for _ in range(num_relations)]
        else:
            raise ValueError(f"unknown weight_mode {weight_mode!r}")
        if relation_scalars:
            p.alpha = Tensor(np.ones(num_relations), requires_grad=True)
        return p


@dataclass
class RelationBasis:
    vectors: Tensor  # B x d0
    coefficients: Tensor  # |R'| x B


def materialize_relation_inputs(basis: RelationBasis | None, free: Tensor | None = None) -> Tensor:
    """Initial relation states: ``coefficients @ vectors``, or the free table."""
    if basis is None:
        if free is None:
            raise ValueError("no basis and no free relation embeddings")
        return free
    if basis.vectors.shape[0] == 0:
        raise ValueError("basis must contain at least one vector")
    if basis.coefficients.shape[1] != basis.vectors.shape[0]:
        raise ops.ShapeError(
            f"coefficients {basis.coefficients.shape} do not match basis {basis.vectors.shape}")
    return ops.matmul(basis.coefficients, basis.vectors)


class _EdgeIndex:
    """Per-graph edge groupings, computed once and cached by graph identity."""

    def __init__(self, g: AugmentedGraph):
        n = g.num_nodes
        self.by_direction = []
        for d in Direction:
            idx = np.flatnonzero(g.direction == d)
            count = np.bincount(g.dst[idx], minlength=n).astype(np.float64)
            self.by_direction.append((idx, g.dst[idx], count))
        self.by_relation = []
        for r in range(g.aug_relation_count):
            idx = np.flatnonzero(g.rel == r)
            count = np.bincount(g.dst[idx], minlength=n).astype(np.float64)
            self.by_relation.append((idx, g.dst[idx], count))
        deg = np.bincount(g.dst, minlength=n).astype(np.float64)
        self.symmetric = 1.0 / np.sqrt(deg[g.src] * deg[g.dst])


_EDGE_CACHE: "weakref.WeakKeyDictionary[AugmentedGraph, _EdgeIndex]" = weakref.WeakKeyDictionary()


def edge_index(g: AugmentedGraph) -> _EdgeIndex:
    idx = _EDGE_CACHE.get(g)
    if idx is None:
        idx = _EDGE_CACHE[g] = _EdgeIndex(g)
    return idx


def _aggregate(msg: Tensor, group, n: int, mean: bool) -> Tensor:
    idx, dst, count = group
    agg = ops.scatter_add_rows(ops.gather_rows(msg, idx), dst, n)
    if mean:
        agg = ops.scale_rows(agg, 1.0 / np.maximum(count, 1.0))
    return agg


def layer_forward(graph: AugmentedGraph, node_states: Tensor, rel_states: Tensor,
                  params: LayerParams, op, training: bool = False,
                  rng: np.random.Generator | None = None, norm_mode: str = "none"):
    """One layer; returns ``(node_states', rel_states')``.

    Messages arriving at a node are summed in edge-id order within each
    direction (or relation) group; the group sums are then added in a fixed
    order, which keeps the result deterministic.
    """
    op = Composition(op)
    n = graph.num_nodes
    if node_states.shape[0] != n:
        raise ops.ShapeError(f"{node_states.shape[0]} node states for {n} nodes")
    if rel_states.shape[0] != graph.aug_relation_count:
        raise ops.ShapeError(
            f"{rel_states.shape[0]} relation states for {graph.aug_relation_count} relations")
    if graph.num_edges and (graph.src.max() >= n or graph.dst.max() >= n):
        raise ops.ShapeError("edge refers to a node outside the graph")
    if norm_mode not in NORM_MODES:
        raise ValueError(f"norm_mode must be one of {NORM_MODES}")
    eidx = edge_index(graph)

    h_src = ops.gather_rows(node_states, graph.src)
    if op is Composition.FIRST:
        msg = h_src
    else:
        msg = compose(op, h_src, ops.gather_rows(rel_states, graph.rel))
    if params.alpha is not None:
        msg = ops.scale_rows(msg, ops.gather_rows(params.alpha, graph.rel))
    if norm_mode == "symmetric":
        msg = ops.scale_rows(msg, eidx.symmetric)
    mean = norm_mode == "in_degree"

    mode = params.weight_mode
    if mode == "direction":
        weights = (params.W_O, params.W_I, params.W_S)
        out = None
        for group, W in zip(eidx.by_direction, weights):
            term = ops.linear(_aggregate(msg, group, n, mean), W)
            out = term if out is None else ops.add(out, term)
    elif mode == "shared":
        agg = None
        for group in eidx.by_direction:
            a = _aggregate(msg, group, n, mean)
            agg = a if agg is None else ops.add(agg, a)
        out = ops.linear(agg, params.W)
    else:
        out = None
        for group, W in zip(eidx.by_relation, params.W_r):
            term = ops.linear(_aggregate(msg, group, n, mean), W)
            out = term if out is None else ops.add(out, term)

    out = ops.dropout(out, params.dropout, rng, training)
    out = ops.activation(params.activation, out)
    rel_out = ops.linear(rel_states, params.W_rel)
    return out, rel_out


class CompGCNModel:
    """Entity inputs, relation inputs (free or basis-decomposed) and K layers."""

    def __init__(self, config: ModelConfig, num_entities: int, num_relations: int,
                 rng: np.random.Generator):
        """``num_relations`` counts augmented relations (``2R + 1``)."""
        self.config = config
        self.num_entities = num_entities
        self.num_relations = num_relations
        d0 = config.dims[0]
        self.entity_embeddings = xavier_init((num_entities, d0), rng, name="X")
        self.basis: RelationBasis | None = None
        self.free_relations: Tensor | None = None
        if config.basis is not None:
            self.basis = RelationBasis(
                vectors=xavier_init((config.basis, d0), rng, name="basis.vectors"),
                coefficients=xavier_init((num_relations, config.basis), rng, name="basis.coefficients"),
            )
        else:
            self.free_relations = xavier_init((num_relations, d0), rng, name="Z")
        self.layers = [
            LayerParams.init(d_in, d_out, num_relations, rng, config.weight_mode,
                             config.relation_scalars, config.dropout, config.activation)
            for d_in, d_out in zip(config.dims[:-1], config.dims[1:])
        ]
        self.frozen: set[str] = set()

    def parameters(self) -> dict[str, Tensor]:
        out = {"X": self.entity_embeddings}
        if self.basis is not None:
            out["basis.vectors"] = self.basis.vectors
            out["basis.coefficients"] = self.basis.coefficients
        else:
            out["Z"] = self.free_relations
        for k, layer in enumerate(self.layers):
            out.update(layer.named_tensors(f"layer{k}."))
        for name, t in out.items():
            t.name = name
        return out

    def trainable(self) -> dict[str, Tensor]:
        params = self.parameters()
        for name, t in params.items():
            t.requires_grad = name not in self.frozen
        return {k: v for k, v in params.items() if k not in self.frozen}

    def freeze(self, *names: str) -> None:
        known = self.parameters()
        for name in names:
            if name not in known:
                raise KeyError(name)
            self.frozen.add(name)

    def relation_inputs(self) -> Tensor:
        return materialize_relation_inputs(self.basis, self.free_relations)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for k, t in params.items():
            if state[k].shape != t.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {t.shape}")
            t.data[...] = state[k]

    def count_parameters(self) -> int:
        return int(sum(t.data.size for t in self.parameters().values()))


def expected_parameter_count(config: ModelConfig, num_entities: int, num_relations: int) -> int:
    """Closed-form parameter count.

    ``|V| d0`` entity inputs, plus ``B d0 + |R'| B`` for a basis (``|R'| d0``
    without), plus per layer ``d_out d_in`` for the relation map and the node
    weights: three for direction routing, one when shared, ``|R'|`` per relation,
    and ``|R'|`` scalars when relation scalars are on.
    """
    d0 = config.dims[0]
    total = num_entities * d0
    if config.basis is not None:
        total += config.basis * d0 + num_relations * config.basis
    else:
        total += num_relations * d0
    per_weight = {"direction": 3, "shared": 1, "relation": num_relations}[config.weight_mode]
    for d_in, d_out in zip(config.dims[:-1], config.dims[1:]):
        total += (1 + per_weight) * d_in * d_out
        if config.relation_scalars:
            total += num_relations
    return total


def encode(model: CompGCNModel, graph: AugmentedGraph, training: bool = False,
           rng: np.random.Generator | None = None, entity_index=None):
    """Run all layers; returns final ``(node_states, relation_states)``.

    ``entity_index`` maps graph nodes to rows of the input table, for inputs
    shared between nodes (node types in graph classification).
    """
    if model.num_relations != graph.aug_relation_count:
        raise ops.ShapeError(
            f"model has {model.num_relations} relations, graph has {graph.aug_relation_count}")
    H = model.entity_embeddings
    if entity_index is not None:
        H = ops.gather_rows(H, entity_index)
    Z = model.relation_inputs()
    for layer in model.layers:
        H, Z = layer_forward(graph, H, Z, layer, model.config.composition, training, rng,
                             model.config.norm_mode)
    return H, Z
