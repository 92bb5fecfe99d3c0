"""Multi-relational graph containers, ingestion and the filtered-candidate index.

Triples are stored as an ``(n, 3)`` integer array of ``(subject, relation, object)``
rows together with a parallel array of split codes.  All containers are treated
as immutable once built.
"""
from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
TRAIN, VALID, TEST = 0, 1, 2


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


class ParseError(GraphError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class MultiRelGraph:
    num_entities: int
    relations: tuple[str, ...]
    triples: np.ndarray  # (n, 3) int64 rows of (s, r, o)
    split: np.ndarray  # (n,) int8 codes, 0=train 1=valid 2=test
    entity_names: tuple[str, ...] | None = None
    unseen_entities: int = 0

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        split = np.asarray(self.split, dtype=np.int8).reshape(-1)
        object.__setattr__(self, "triples", triples)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "relations", tuple(self.relations))
        if self.entity_names is not None:
            object.__setattr__(self, "entity_names", tuple(self.entity_names))
        triples.setflags(write=False)
        split.setflags(write=False)
        self.validate()

    def validate(self) -> None:
        t = self.triples
        if len(self.split) != len(t):
            raise GraphError("split tags and triples differ in length")
        if len(t):
            if t[:, [0, 2]].min() < 0 or t[:, [0, 2]].max() >= self.num_entities:
                raise GraphError("entity id out of range")
            if t[:, 1].min() < 0 or t[:, 1].max() >= len(self.relations):
                raise GraphError("relation id out of range")
            if self.split.min() < 0 or self.split.max() > 2:
                raise GraphError("unknown split tag")
            uniq = np.unique(t, axis=0)
            if len(uniq) != len(t):
                raise GraphError("duplicate triple (within a split or shared between splits)")
        if self.entity_names is not None and len(self.entity_names) != self.num_entities:
            raise GraphError("entity_names length does not match num_entities")

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def split_triples(self, name: str | int) -> np.ndarray:
        code = SPLITS.index(name) if isinstance(name, str) else int(name)
        return self.triples[self.split == code]

    @property
    def train_triples(self) -> np.ndarray:
        return self.split_triples(TRAIN)

    def entity_name(self, idx: int) -> str:
        if self.entity_names is None:
            return f"e{idx}"
        return self.entity_names[idx]

    @classmethod
    def from_splits(
        cls,
        num_entities: int,
        relations: Sequence[str] | int,
        train: Iterable,
        valid: Iterable = (),
        test: Iterable = (),
        entity_names: Sequence[str] | None = None,
    ) -> "MultiRelGraph":
        """Build a graph from per-split lists of integer ``(s, r, o)`` triples."""
        if isinstance(relations, int):
            relations = [f"r{i}" for i in range(relations)]
        parts, tags = [], []
        for code, rows in enumerate((train, valid, test)):
            arr = np.asarray(list(rows), dtype=np.int64).reshape(-1, 3)
            parts.append(arr)
            tags.append(np.full(len(arr), code, dtype=np.int8))
        return cls(
            num_entities=num_entities,
            relations=tuple(relations),
            triples=np.concatenate(parts),
            split=np.concatenate(tags),
            entity_names=entity_names,
        )


def _read_split(path: Path, entity_ids: dict, relation_ids: dict, add_new: bool):
    rows = []
    seen_new = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            s, r, o = (p.strip() for p in parts)
            for name in (s, o):
                if name not in entity_ids:
                    entity_ids[name] = len(entity_ids)
                    if not add_new:
                        seen_new.add(name)
            if r not in relation_ids:
                relation_ids[r] = len(relation_ids)
            rows.append((entity_ids[s], relation_ids[r], entity_ids[o]))
    return rows, seen_new


def load_triples(path, fmt: str = "tsv-sro", require_all: bool = True) -> MultiRelGraph:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from a dataset directory.

    Ids are assigned by first appearance, scanning train, then valid, then test.
    Entities first seen outside the training split are kept and counted in
    ``unseen_entities``.  With ``require_all=False`` missing valid/test files
    are treated as empty.
    """
    if fmt != "tsv-sro":
        raise ValueError(f"unsupported format {fmt!r}")
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    per_split = []
    unseen: set = set()
    for code, name in enumerate(SPLITS):
        fpath = root / f"{name}.txt"
        if not fpath.exists():
            if code == TRAIN or require_all:
                raise FileNotFoundError(f"missing split file: {fpath}")
            per_split.append([])
            continue
        rows, new = _read_split(fpath, entity_ids, relation_ids, add_new=(code == TRAIN))
        if code == TRAIN and not rows:
            raise GraphError("empty training split")
        unseen |= new
        per_split.append(rows)
    if unseen:
        logger.warning("%d entities appear only in valid/test splits", len(unseen))
    names = [None] * len(entity_ids)
    for name, idx in entity_ids.items():
        names[idx] = name
    rel_names = [None] * len(relation_ids)
    for name, idx in relation_ids.items():
        rel_names[idx] = name
    g = MultiRelGraph.from_splits(len(entity_ids), rel_names, *per_split, entity_names=names)
    object.__setattr__(g, "unseen_entities", len(unseen))
    return g


def write_triples(g: MultiRelGraph, directory) -> None:
    """Write the graph back in the three-file TSV layout using entity/relation names."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for code, name in enumerate(SPLITS):
        with open(out / f"{name}.txt", "w", encoding="utf-8", newline="\n") as fh:
            for s, r, o in g.split_triples(code):
                fh.write(f"{g.entity_name(s)}\t{g.relations[r]}\t{g.entity_name(o)}\n")


def dump_id_maps(g: MultiRelGraph, directory) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "entities.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i in range(g.num_entities):
            fh.write(f"{i}\t{g.entity_name(i)}\n")
    with open(out / "relations.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i, name in enumerate(g.relations):
            fh.write(f"{i}\t{name}\n")


def dataset_statistics(g: MultiRelGraph) -> dict:
    counts = np.bincount(g.split, minlength=3)
    return {
        "entities": g.num_entities,
        "relations": g.num_relations,
        "edges": int(len(g.triples)),
        "train": int(counts[TRAIN]),
        "valid": int(counts[VALID]),
        "test": int(counts[TEST]),
        "unseen_entities": g.unseen_entities,
    }


class Direction(enum.IntEnum):
    ORIGINAL = 0
    INVERSE = 1
    SELF_LOOP = 2


@dataclass(frozen=True, eq=False)
class AugmentedGraph:
    """Train-split edges plus inverse edges and one self-loop per entity.

    Relation id layout: ``[0, R)`` original, ``[R, 2R)`` inverse, ``2R`` self-loop.
    Edges are ordered originals, inverses, then self-loops by entity id.
    """

    base: MultiRelGraph
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    direction: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.base.num_entities

    @property
    def num_base_relations(self) -> int:
        return self.base.num_relations

    @property
    def aug_relation_count(self) -> int:
        return 2 * self.base.num_relations + 1

    @property
    def self_loop_relation(self) -> int:
        return 2 * self.base.num_relations

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list[tuple[int, int, int, Direction]]:
        return [
            (int(s), int(t), int(r), Direction(int(d)))
            for s, t, r, d in zip(self.src, self.dst, self.rel, self.direction)
        ]

    def inverse_of(self, rel_id: int) -> int:
        """Map an original relation id to its inverse and vice versa."""
        R = self.base.num_relations
        if rel_id < R:
            return rel_id + R
        if rel_id < 2 * R:
            return rel_id - R
        return rel_id


def augment(g: MultiRelGraph) -> AugmentedGraph:
    train = g.train_triples
    R = g.num_relations
    n = g.num_entities
    s, r, o = train[:, 0], train[:, 1], train[:, 2]
    loops = np.arange(n, dtype=np.int64)
    src = np.concatenate([s, o, loops])
    dst = np.concatenate([o, s, loops])
    rel = np.concatenate([r, r + R, np.full(n, 2 * R, dtype=np.int64)])
    direction = np.concatenate([
        np.full(len(train), Direction.ORIGINAL, dtype=np.int8),
        np.full(len(train), Direction.INVERSE, dtype=np.int8),
        np.full(n, Direction.SELF_LOOP, dtype=np.int8),
    ])
    for a in (src, dst, rel, direction):
        a.setflags(write=False)
    return AugmentedGraph(base=g, src=src, dst=dst, rel=rel, direction=direction)


def prune_top_relations(g: MultiRelGraph, m: int) -> MultiRelGraph:
    """Keep triples of the ``m`` most frequent relations (by train count).

    Ties go to the lower relation id.  Surviving relations and incident entities
    are re-numbered in ascending order of their original ids.
    """
    if not 1 <= m <= g.num_relations:
        raise ValueError(f"m must lie in [1, {g.num_relations}], got {m}")
    counts = np.bincount(g.train_triples[:, 1], minlength=g.num_relations)
    order = sorted(range(g.num_relations), key=lambda r: (-counts[r], r))
    kept_rel = np.array(sorted(order[:m]), dtype=np.int64)
    keep = np.isin(g.triples[:, 1], kept_rel)
    triples = g.triples[keep]
    split = g.split[keep]
    kept_ent = np.unique(triples[:, [0, 2]])
    ent_map = np.full(g.num_entities, -1, dtype=np.int64)
    ent_map[kept_ent] = np.arange(len(kept_ent))
    rel_map = np.full(g.num_relations, -1, dtype=np.int64)
    rel_map[kept_rel] = np.arange(len(kept_rel))
    new = np.column_stack([ent_map[triples[:, 0]], rel_map[triples[:, 1]], ent_map[triples[:, 2]]])
    names = None
    if g.entity_names is not None:
        names = tuple(g.entity_names[i] for i in kept_ent)
    return MultiRelGraph(
        num_entities=len(kept_ent),
        relations=tuple(g.relations[r] for r in kept_rel),
        triples=new,
        split=split,
        entity_names=names,
    )


class Category(str, enum.Enum):
    ONE_TO_ONE = "1-1"
    ONE_TO_MANY = "1-N"
    MANY_TO_ONE = "N-1"
    MANY_TO_MANY = "N-N"


@dataclass(frozen=True)
class RelationCategory:
    relation: int
    category: Category
    tails_per_head: float
    heads_per_tail: float
    flagged: bool = False


def categorize_relations(g: MultiRelGraph, threshold: float = 1.5) -> list[RelationCategory]:
    """Tag every relation 1-1 / 1-N / N-1 / N-N from its train-split head/tail ratios."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    train = g.train_triples
    out = []
    for r in range(g.num_relations):
        rows = train[train[:, 1] == r]
        if len(rows) == 0:
            logger.warning("relation %s has no training triples", g.relations[r])
            out.append(RelationCategory(r, Category.ONE_TO_ONE, 0.0, 0.0, flagged=True))
            continue
        tph = len(rows) / len(np.unique(rows[:, 0]))
        hpt = len(rows) / len(np.unique(rows[:, 2]))
        many_tails, many_heads = tph >= threshold, hpt >= threshold
        if not many_tails and not many_heads:
            cat = Category.ONE_TO_ONE
        elif many_tails and not many_heads:
            cat = Category.ONE_TO_MANY
        elif many_heads and not many_tails:
            cat = Category.MANY_TO_ONE
        else:
            cat = Category.MANY_TO_MANY
        out.append(RelationCategory(r, cat, tph, hpt))
    return out


@dataclass(frozen=True, eq=False)
class FilterIndex:
    """Known true objects per (subject, relation) and subjects per (object, relation)."""

    objects: dict = field(default_factory=dict)
    subjects: dict = field(default_factory=dict)

    def true_objects(self, s: int, r: int) -> frozenset:
        return self.objects.get((int(s), int(r)), frozenset())

    def true_subjects(self, o: int, r: int) -> frozenset:
        return self.subjects.get((int(o), int(r)), frozenset())


def build_filter_index(g: MultiRelGraph) -> FilterIndex:
    objs = defaultdict(set)
    subs = defaultdict(set)
    for s, r, o in g.triples.tolist():
        objs[(s, r)].add(o)
        subs[(o, r)].add(s)
    return FilterIndex(
        objects={k: frozenset(v) for k, v in objs.items()},
        subjects={k: frozenset(v) for k, v in subs.items()},
    )


def train_label_sets(g: MultiRelGraph) -> dict[tuple[int, int], list[int]]:
    """1-N training targets over the train split, in both directions.

    Keys are ``(entity, augmented relation)``; inverse queries use ``r + R``.
    Insertion order follows the train triples, which keeps batching deterministic.
    """
    R = g.num_relations
    labels: dict[tuple[int, int], list[int]] = {}
    for s, r, o in g.train_triples.tolist():
        labels.setdefault((s, r), []).append(o)
    for s, r, o in g.train_triples.tolist():
        labels.setdefault((o, r + R), []).append(s)
    return labels
