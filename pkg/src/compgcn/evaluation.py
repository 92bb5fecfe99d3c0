"""Filtered ranking and link-prediction metrics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import AugmentedGraph, Category, FilterIndex, RelationCategory
from .model import CompGCNModel, encode
from .numeric.tensor import Tensor
from .scoring import score_all_objects

HITS_AT = (1, 3, 10)


@dataclass(frozen=True)
class RankRecord:
    side: str  # "head" or "tail": which entity of the triple was predicted
    relation: int  # base relation id
    gold: int
    rank: int


def filtered_rank(scores, gold: int, known_true) -> int:
    """Rank of ``gold`` among entities not known to be true answers.

    Competitors scoring strictly higher count fully; ties with the gold score
    count for half, rounded up.  The gold entity never competes with itself.
    """
    s = np.asarray(scores, dtype=np.float64)
    gold = int(gold)
    if not 0 <= gold < len(s):
        raise IndexError(f"gold entity {gold} out of range for {len(s)} scores")
    competitor = np.ones(len(s), dtype=bool)
    if known_true:
        competitor[np.fromiter(known_true, dtype=np.int64)] = False
    competitor[gold] = False
    target = s[gold]
    greater = int(np.count_nonzero(competitor & (s > target)))
    ties = int(np.count_nonzero(competitor & (s == target)))
    return 1 + greater + (ties + 1) // 2


def raw_rank(scores, gold: int) -> int:
    return filtered_rank(scores, gold, ())


@dataclass
class Metrics:
    count: int
    mrr: float
    mr: float
    hits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"count": self.count, "mrr": self.mrr, "mr": self.mr}
        d.update({f"hits@{k}": v for k, v in self.hits.items()})
        return d


def _metrics(ranks) -> Metrics | None:
    r = np.asarray(ranks, dtype=np.float64)
    if len(r) == 0:
        return None
    return Metrics(
        count=len(r),
        mrr=float(np.mean(1.0 / r)),
        mr=float(np.mean(r)),
        hits={k: float(np.mean(r <= k)) for k in HITS_AT},
    )


@dataclass
class EvalReport:
    overall: Metrics
    head: Metrics | None
    tail: Metrics | None
    by_category: dict = field(default_factory=dict)  # category -> {"all"|"head"|"tail": Metrics}

    @property
    def mrr(self) -> float:
        return self.overall.mrr

    def to_dict(self) -> dict:
        def m(x):
            return None if x is None else x.to_dict()
        return {
            "overall": m(self.overall),
            "head": m(self.head),
            "tail": m(self.tail),
            "by_category": {c: {k: m(v) for k, v in sub.items()} for c, sub in self.by_category.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        header = f"{'':<16}{'MRR':>8}{'MR':>10}{'H@10':>8}{'H@3':>8}{'H@1':>8}"
        lines = [header]

        def row(label, m):
            if m is None:
                return
            lines.append(f"{label:<16}{m.mrr:>8.3f}{m.mr:>10.1f}"
                         f"{m.hits[10]:>8.3f}{m.hits[3]:>8.3f}{m.hits[1]:>8.3f}")

        row("overall", self.overall)
        row("head pred", self.head)
        row("tail pred", self.tail)
        for side, label in (("head", "Head Pred"), ("tail", "Tail Pred")):
            for cat in Category:
                sub = self.by_category.get(cat.value)
                if sub is not None and sub.get(side) is not None:
                    row(f"{label} {cat.value}", sub[side])
        return "\n".join(lines)


def compute_metrics(records, categories: list[RelationCategory] | None = None) -> EvalReport:
    """MRR, MR and Hits@{1,3,10} overall, per side and per relation category."""
    records = list(records)
    if not records:
        raise ValueError("no rank records")
    ranks = [r.rank for r in records]
    report = EvalReport(
        overall=_metrics(ranks),
        head=_metrics([r.rank for r in records if r.side == "head"]),
        tail=_metrics([r.rank for r in records if r.side == "tail"]),
    )
    if categories is not None:
        tag = {c.relation: c.category.value for c in categories}
        for cat in Category:
            sub = [r for r in records if tag[r.relation] == cat.value]
            if not sub:
                continue
            report.by_category[cat.value] = {
                "all": _metrics([r.rank for r in sub]),
                "head": _metrics([r.rank for r in sub if r.side == "head"]),
                "tail": _metrics([r.rank for r in sub if r.side == "tail"]),
            }
    return report


def rank_triples(node_states: np.ndarray, rel_states: np.ndarray, triples: np.ndarray,
                 num_base_relations: int, filt: FilterIndex | None, score_fn="distmult",
                 norm: int = 1, batch_size: int = 256) -> list[RankRecord]:
    """Rank the object given ``(s, r)`` and the subject given ``(o, r^-1)`` for every triple."""
    H = Tensor(node_states)
    Rr = Tensor(rel_states)
    R = num_base_relations
    queries = []
    for s, r, o in np.asarray(triples, dtype=np.int64).tolist():
        known = filt.true_objects(s, r) if filt is not None else ()
        queries.append(("tail", s, r, r, o, known))
        known = filt.true_subjects(o, r) if filt is not None else ()
        queries.append(("head", o, r + R, r, s, known))
    records = []
    for start in range(0, len(queries), batch_size):
        chunk = queries[start:start + batch_size]
        ents = np.array([q[1] for q in chunk], dtype=np.int64)
        rels = np.array([q[2] for q in chunk], dtype=np.int64)
        scores = score_all_objects(score_fn, Tensor(H.data[ents]), Tensor(Rr.data[rels]), H, norm).data
        for row, (side, _, _, base_rel, gold, known) in zip(scores, chunk):
            records.append(RankRecord(side, base_rel, gold, filtered_rank(row, gold, known)))
    return records


def evaluate_model(model: CompGCNModel, graph: AugmentedGraph, split: str, filt: FilterIndex,
                   score_fn="distmult", norm: int = 1,
                   categories: list[RelationCategory] | None = None,
                   batch_size: int = 256) -> EvalReport:
    """Filtered evaluation of one split with the encoder in eval mode (no dropout)."""
    H, Rr = encode(model, graph, training=False)
    triples = graph.base.split_triples(split)
    records = rank_triples(H.data, Rr.data, triples, graph.num_base_relations, filt,
                           score_fn, norm, batch_size)
    return compute_metrics(records, categories)


def metrics_close(a: Metrics, b: Metrics, tol: float = 0.0) -> bool:
    pairs = [(a.mrr, b.mrr), (a.mr, b.mr)] + [(a.hits[k], b.hits[k]) for k in HITS_AT]
    return a.count == b.count and all(math.isclose(x, y, abs_tol=tol) for x, y in pairs)

