"""Training loops for link prediction, node classification and graph classification."""
from __future__ import annotations

import csv
import json
import io
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, grid_configs
from .evaluation import EvalReport, evaluate_model
from .graph import (
    AugmentedGraph,
    MultiRelGraph,
    TRAIN,
    augment,
    build_filter_index,
    categorize_relations,
    load_triples,
    train_label_sets,
)
from .model import CompGCNModel, encode
from .numeric import ops
from .numeric.checkpoint import load_checkpoint, save_checkpoint
from .numeric.optim import Adam, xavier_init
from .numeric.tensor import Tape, Tensor, backward
from .scoring import link_prediction_loss, multi_hot

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "loss", "valid_mrr", "valid_mr", "valid_hits1", "valid_hits3",
                  "valid_hits10")


class TrainingDiverged(RuntimeError):
    pass


@contextmanager
def _diverge_guard(epoch: int, step: int):
    try:
        yield
    except FloatingPointError as exc:
        raise TrainingDiverged(f"{exc} at epoch {epoch}, step {step}") from None


def _check_loss(loss: Tensor, epoch: int, step: int) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, step {step}")
    return value


def metrics_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in history:
        writer.writerow(["" if row.get(c) is None else repr(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def save_model(path, model: CompGCNModel, cfg: RunConfig, extra: dict | None = None,
               arrays: dict | None = None) -> None:
    meta = {
        "config": cfg.to_dict(),
        "num_entities": model.num_entities,
        "num_relations": model.num_relations,
    }
    meta.update(extra or {})
    state = {"model." + k: v for k, v in model.state_dict().items()}
    for k, v in (arrays or {}).items():
        state[k] = v
    save_checkpoint(path, state, meta)


def load_model(path) -> tuple[CompGCNModel, RunConfig, dict, dict]:
    """Rebuild a model from a checkpoint; returns ``(model, config, meta, extra arrays)``."""
    arrays, meta = load_checkpoint(path)
    cfg = RunConfig.from_dict(meta["config"])
    model = CompGCNModel(cfg.model, meta["num_entities"], meta["num_relations"],
                         np.random.default_rng(0))
    state = {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}
    model.load_state_dict(state)
    extra = {k: v for k, v in arrays.items() if not k.startswith("model.")}
    return model, cfg, meta, extra


@dataclass
class LinkPredictionResult:
    model: CompGCNModel
    graph: AugmentedGraph
    history: list[dict]
    best_epoch: int
    valid_report: EvalReport | None
    test_report: EvalReport | None
    losses: list[float] = field(default_factory=list)


def train_link_prediction(cfg: RunConfig, graph: MultiRelGraph | None = None,
                          out_dir=None, model: CompGCNModel | None = None) -> LinkPredictionResult:
    """1-N link-prediction training with periodic filtered validation.

    Every optimisation step re-encodes the whole graph.  The parameters with
    the best validation MRR are kept; without a validation split the final
    parameters are used.  Initialisation and batch shuffling/dropout draw from
    separate streams derived from ``cfg.seed``; a prebuilt ``model`` replaces
    the initialisation.
    """
    g = graph if graph is not None else load_triples(cfg.dataset)
    ag = augment(g)
    filt = build_filter_index(g)
    categories = categorize_relations(g)
    if model is None:
        model = CompGCNModel(cfg.model, g.num_entities, ag.aug_relation_count,
                             np.random.default_rng(cfg.seed))
    rng = np.random.default_rng([cfg.seed, 1])
    params = model.trainable()
    opt = Adam(params, lr=cfg.lr)
    labels = train_label_sets(g)
    keys = list(labels)
    has_valid = len(g.split_triples("valid")) > 0

    history: list[dict] = []
    losses: list[float] = []
    best_mrr, best_epoch, best_state, bad_evals = -1.0, 0, None, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(keys))
        batch_losses = []
        for step, start in enumerate(range(0, len(keys), cfg.batch_size)):
            batch = [keys[i] for i in order[start:start + cfg.batch_size]]
            targets = multi_hot(labels, batch, g.num_entities)
            with _diverge_guard(epoch, step), Tape() as tape:
                H, Rr = encode(model, ag, training=True, rng=rng)
                loss = link_prediction_loss(cfg.score_fn, H, Rr, batch, targets,
                                            cfg.label_smoothing, cfg.transe_norm)
            value = _check_loss(loss, epoch, step)
            opt.zero_grad()
            backward(tape, loss)
            opt.step()
            batch_losses.append(value)
            losses.append(value)
        row = {"epoch": epoch, "loss": float(np.mean(batch_losses)) if batch_losses else None}
        if has_valid and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            rep = evaluate_model(model, ag, "valid", filt, cfg.score_fn, cfg.transe_norm)
            row.update(valid_mrr=rep.mrr, valid_mr=rep.overall.mr,
                       valid_hits1=rep.overall.hits[1], valid_hits3=rep.overall.hits[3],
                       valid_hits10=rep.overall.hits[10])
            logger.info("epoch %d loss %.5f valid MRR %.4f", epoch, row["loss"], rep.mrr)
            if rep.mrr > best_mrr:
                best_mrr, best_epoch, best_state, bad_evals = rep.mrr, epoch, model.state_dict(), 0
            else:
                bad_evals += 1
                if bad_evals >= cfg.patience:
                    history.append(row)
                    logger.info("early stop at epoch %d", epoch)
                    break
        history.append(row)

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch = len(history)
    valid_report = (evaluate_model(model, ag, "valid", filt, cfg.score_fn, cfg.transe_norm,
                                   categories) if has_valid else None)
    test_report = None
    if len(g.split_triples("test")):
        test_report = evaluate_model(model, ag, "test", filt, cfg.score_fn, cfg.transe_norm,
                                     categories)
    result = LinkPredictionResult(model, ag, history, best_epoch, valid_report, test_report, losses)
    if out_dir is not None:
        write_outputs(out_dir, cfg, result)
    return result


def write_outputs(out_dir, cfg: RunConfig, result: LinkPredictionResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(result.history), encoding="utf-8")
    report = {
        "best_epoch": result.best_epoch,
        "valid": result.valid_report.to_dict() if result.valid_report else None,
        "test": result.test_report.to_dict() if result.test_report else None,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    save_model(out / "model.ckpt", result.model, cfg, {"best_epoch": result.best_epoch})


def grid_search(cfg: RunConfig, graph: MultiRelGraph | None = None):
    """Train every grid point and return ``(best_config, best_result, all_results)``."""
    g = graph if graph is not None else load_triples(cfg.dataset)
    results = []
    for c in grid_configs(cfg):
        res = train_link_prediction(c, g)
        score = res.valid_report.mrr if res.valid_report else -1.0
        results.append((c, res, score))
    best = max(results, key=lambda t: t[2])
    return best[0], best[1], results


# -- node classification -----------------------------------------------------

@dataclass
class NodeLabels:
    nodes: np.ndarray
    classes: np.ndarray
    is_test: np.ndarray
    class_names: tuple

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def load_node_labels(path, graph: MultiRelGraph, seed: int = 0, test_frac: float = 0.2) -> NodeLabels:
    """Read ``entity<TAB>class[<TAB>train|test]``.

    Without a split column a seeded ``test_frac`` of the labelled nodes is
    held out as test.
    """
    index = {graph.entity_name(i): i for i in range(graph.num_entities)}
    nodes, classes, splits = [], [], []
    class_ids: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected entity<TAB>class[<TAB>split]")
            if parts[0] not in index:
                raise ValueError(f"{path}:{lineno}: unknown entity {parts[0]!r}")
            nodes.append(index[parts[0]])
            classes.append(class_ids.setdefault(parts[1], len(class_ids)))
            splits.append(parts[2] if len(parts) == 3 else None)
    if not nodes:
        raise ValueError("no labelled nodes")
    if all(s is None for s in splits):
        rng = np.random.default_rng(seed)
        is_test = np.zeros(len(nodes), dtype=bool)
        is_test[rng.permutation(len(nodes))[: int(round(test_frac * len(nodes)))]] = True
    else:
        is_test = np.array([s == "test" for s in splits])
    names = tuple(sorted(class_ids, key=class_ids.get))
    return NodeLabels(np.array(nodes), np.array(classes), is_test, names)


@dataclass
class ClassificationResult:
    test_accuracy: float
    valid_accuracy: float
    history: list[dict]


class _Head:
    def __init__(self, d: int, num_classes: int, rng):
        self.W = xavier_init((num_classes, d), rng, name="head.W")
        self.b = Tensor(np.zeros(num_classes), requires_grad=True, name="head.b")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add_bias(ops.linear(x, self.W), self.b)

    def parameters(self):
        return {"head.W": self.W, "head.b": self.b}


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels)) if len(labels) else float("nan")


def train_node_classification(cfg: RunConfig, graph: MultiRelGraph | None = None,
                              labels: NodeLabels | None = None) -> ClassificationResult:
    """Encoder plus linear softmax head on final node states.

    Ten percent of the training nodes are held out for model selection; the
    best-validation parameters are scored on the test nodes.  All triples in
    the dataset serve as message-passing edges.
    """
    rng = np.random.default_rng(cfg.seed)
    if graph is None:
        raw = load_triples(cfg.dataset, require_all=False)
        graph = MultiRelGraph(raw.num_entities, raw.relations, raw.triples,
                              np.full(len(raw.triples), TRAIN), raw.entity_names)
    if labels is None:
        labels = load_node_labels(Path(cfg.dataset) / "labels.tsv", graph, cfg.seed)
    if len(labels.nodes) == 0:
        raise ValueError("no labelled nodes")
    ag = augment(graph)
    model = CompGCNModel(cfg.model, graph.num_entities, ag.aug_relation_count, rng)
    head = _Head(cfg.model.dims[-1], labels.num_classes, rng)
    params = dict(model.trainable(), **head.parameters())
    opt = Adam(params, lr=cfg.lr)

    train_pos = np.flatnonzero(~labels.is_test)
    perm = rng.permutation(train_pos)
    n_valid = int(round(0.1 * len(perm))) if len(perm) >= 10 else 0
    valid_pos, fit_pos = perm[:n_valid], perm[n_valid:]
    test_pos = np.flatnonzero(labels.is_test)

    def logits_for(positions, training):
        H, _ = encode(model, ag, training=training, rng=rng)
        return head(ops.gather_rows(H, labels.nodes[positions]))

    history = []
    best_acc, best_state, bad = -1.0, None, 0
    for epoch in range(1, cfg.epochs + 1):
        with _diverge_guard(epoch, 0), Tape() as tape:
            loss = ops.softmax_cross_entropy(logits_for(fit_pos, True), labels.classes[fit_pos])
        value = _check_loss(loss, epoch, 0)
        opt.zero_grad()
        backward(tape, loss)
        opt.step()
        row = {"epoch": epoch, "loss": value}
        if len(valid_pos) and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            acc = _accuracy(logits_for(valid_pos, False).data, labels.classes[valid_pos])
            row["valid_accuracy"] = acc
            if acc > best_acc:
                best_acc, bad = acc, 0
                best_state = {k: v.data.copy() for k, v in params.items()}
            else:
                bad += 1
                if bad >= cfg.patience:
                    history.append(row)
                    break
        history.append(row)
    if best_state is not None:
        for k, v in params.items():
            v.data[...] = best_state[k]
    test_acc = _accuracy(logits_for(test_pos, False).data, labels.classes[test_pos])
    return ClassificationResult(test_acc, best_acc if best_state is not None else float("nan"), history)


# -- graph classification ----------------------------------------------------

@dataclass
class GraphDataset:
    """Collection of small graphs over a shared relation and node-type vocabulary."""

    graphs: list  # (num_nodes, triples, node_types, label)
    num_relations: int
    num_node_types: int
    num_classes: int

    def __len__(self):
        return len(self.graphs)

    @classmethod
    def from_tuples(cls, graphs, num_relations=None) -> "GraphDataset":
        R = num_relations or 1 + max((t[1] for g in graphs for t in g[1]), default=0)
        T = 1 + max(int(np.max(g[2])) if len(g[2]) else 0 for g in graphs)
        C = 1 + max(g[3] for g in graphs)
        return cls(list(graphs), R, T, C)


def load_graph_dataset(path) -> GraphDataset:
    """Directory with ``index.tsv`` (``graph<TAB>label``) and one sub-directory per graph.

    Each graph directory holds ``triples.txt`` (``node<TAB>relation<TAB>node``)
    and optionally ``nodes.tsv`` (``node<TAB>type``) listing all nodes.
    """
    root = Path(path)
    rel_ids: dict[str, int] = {}
    type_ids: dict[str, int] = {}
    class_ids: dict[str, int] = {}
    graphs = []
    with open(root / "index.tsv", encoding="utf-8") as fh:
        entries = [ln.rstrip("\r\n").split("\t") for ln in fh if ln.strip()]
    for name, label in entries:
        gdir = root / name
        node_ids: dict[str, int] = {}
        types: list[int] = []
        if (gdir / "nodes.tsv").exists():
            with open(gdir / "nodes.tsv", encoding="utf-8") as fh:
                for ln in fh:
                    if ln.strip():
                        node, t = ln.rstrip("\r\n").split("\t")
                        node_ids[node] = len(node_ids)
                        types.append(type_ids.setdefault(t, len(type_ids)))
        rows = []
        with open(gdir / "triples.txt", encoding="utf-8") as fh:
            for ln in fh:
                if not ln.strip():
                    continue
                s, r, o = ln.rstrip("\r\n").split("\t")
                for node in (s, o):
                    if node not in node_ids:
                        node_ids[node] = len(node_ids)
                        types.append(type_ids.setdefault("", len(type_ids)))
                rows.append((node_ids[s], rel_ids.setdefault(r, len(rel_ids)), node_ids[o]))
        graphs.append((len(node_ids), rows, np.array(types, dtype=np.int64),
                       class_ids.setdefault(label, len(class_ids))))
    if not graphs:
        raise ValueError(f"{root}: no graphs listed in index.tsv")
    return GraphDataset(graphs, max(1, len(rel_ids)), max(1, len(type_ids)), len(class_ids))


def batch_graphs(ds: GraphDataset, indices):
    """Disjoint union of the selected graphs: ``(augmented graph, node types, segment ids, labels)``."""
    rows, types, segments, labels = [], [], [], []
    offset = 0
    for k, i in enumerate(indices):
        n, triples, node_types, label = ds.graphs[i]
        rows.extend((s + offset, r, o + offset) for s, r, o in triples)
        types.append(node_types)
        segments.append(np.full(n, k, dtype=np.int64))
        labels.append(label)
        offset += n
    g = MultiRelGraph.from_splits(offset, ds.num_relations, rows)
    return augment(g), np.concatenate(types), np.concatenate(segments), np.array(labels)


def readout(node_states: Tensor, segments, num_graphs: int) -> Tensor:
    """Graph embedding as the mean of its node states."""
    return ops.segment_mean(node_states, segments, num_graphs)


def kfold_indices(n: int, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``k`` folds whose sizes differ by at most one."""
    if n < k:
        raise ValueError(f"need at least {k} items for {k} folds, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CrossValidationResult:
    fold_accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracies))


def train_graph_classification(cfg: RunConfig, dataset: GraphDataset | None = None) -> CrossValidationResult:
    """k-fold cross-validation (default 10) of encoder + mean readout + softmax.

    Each fold trains from scratch on the other folds and records accuracy on
    the held-out fold after the last epoch.
    """
    ds = dataset if dataset is not None else load_graph_dataset(cfg.dataset)
    if len(ds) < cfg.folds:
        raise ValueError(f"need at least {cfg.folds} graphs, got {len(ds)}")
    folds = kfold_indices(len(ds), cfg.folds, cfg.seed)
    accs = []
    for f, held in enumerate(folds):
        rng = np.random.default_rng([cfg.seed, f])
        train_idx = np.concatenate([folds[j] for j in range(len(folds)) if j != f])
        model = CompGCNModel(cfg.model, ds.num_node_types, 2 * ds.num_relations + 1, rng)
        head = _Head(cfg.model.dims[-1], ds.num_classes, rng)
        params = dict(model.trainable(), **head.parameters())
        opt = Adam(params, lr=cfg.lr)
        batch_size = min(cfg.batch_size, len(train_idx))
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(train_idx)
            for step, start in enumerate(range(0, len(order), batch_size)):
                sel = order[start:start + batch_size]
                ag, types, seg, y = batch_graphs(ds, sel)
                with _diverge_guard(epoch, step), Tape() as tape:
                    H, _ = encode(model, ag, training=True, rng=rng, entity_index=types)
                    loss = ops.softmax_cross_entropy(head(readout(H, seg, len(sel))), y)
                _check_loss(loss, epoch, step)
                opt.zero_grad()
                backward(tape, loss)
                opt.step()
        ag, types, seg, y = batch_graphs(ds, held)
        H, _ = encode(model, ag, training=False, entity_index=types)
        accs.append(_accuracy(head(readout(H, seg, len(held))).data, y))
        logger.info("fold %d accuracy %.3f", f, accs[-1])
    return CrossValidationResult(accs)


# -- scalability study -------------------------------------------------------

SWEEP_COLUMNS = ("study", "m", "B", "seed", "mrr", "reference_mrr", "relative_mrr")


def scalability_sweep(cfg: RunConfig, m_values=(), b_values=(), seeds=None, graph=None,
                      pruned_basis: int = 5):
    """Relative MRR of basis-decomposed relation inputs.

    For every ``m`` the dataset is pruned to its ``m`` most frequent relations
    and a ``pruned_basis``-vector model is compared with independent relation
    embeddings.  For every ``B`` a ``B``-vector model is compared with
    independent embeddings on the full dataset.  All runs share the epoch
    budget; each seed is used for both sides of a comparison.
    """
    from .graph import prune_top_relations

    g = graph if graph is not None else load_triples(cfg.dataset)
    seeds = list(seeds) if seeds is not None else [cfg.seed]

    def run(graph_, basis, seed):
        c = replace(cfg, seed=seed, model=replace(cfg.model, basis=basis))
        res = train_link_prediction(c, graph_)
        rep = res.test_report or res.valid_report
        return rep.mrr

    rows = []
    for m in m_values:
        gm = prune_top_relations(g, m)
        for seed in seeds:
            ref = run(gm, None, seed)
            mrr = run(gm, pruned_basis, seed)
            rows.append({"study": "relations", "m": m, "B": pruned_basis, "seed": seed,
                         "mrr": mrr, "reference_mrr": ref, "relative_mrr": mrr / ref})
    if b_values:
        refs = {seed: run(g, None, seed) for seed in seeds}
        for b in b_values:
            for seed in seeds:
                mrr = run(g, b, seed)
                rows.append({"study": "basis", "m": g.num_relations, "B": b, "seed": seed,
                             "mrr": mrr, "reference_mrr": refs[seed],
                             "relative_mrr": mrr / refs[seed]})
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()
