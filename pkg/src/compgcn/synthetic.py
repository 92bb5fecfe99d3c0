"""Small generated datasets with known structure, for tests and demos."""
from __future__ import annotations

import numpy as np

from .graph import MultiRelGraph


def compositional_kg(num_entities: int = 20, seed: int = 0, holdout: int = 4) -> MultiRelGraph:
    """KG whose third relation is the composition of the first two.

    Entities are split at random into groups ``A`` (half), ``B`` and ``C``
    (a quarter each).  ``r0`` maps every entity of ``A`` to a random member of
    ``B``, ``r1`` maps ``B`` onto ``C`` bijectively and ``r2(x) = r1(r0(x))``.
    Disjoint groups keep every relation asymmetric, which a symmetric decoder
    such as DistMult needs.  All ``r0``/``r1`` facts and most ``r2`` facts are
    training data; ``holdout`` of the ``r2`` facts are split between valid and test.
    """
    if num_entities < 4:
        raise ValueError("need at least 4 entities")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(num_entities)
    n_c = num_entities // 4
    n_a = num_entities - 2 * n_c
    A, B, C = perm[:n_a], perm[n_a:n_a + n_c], perm[n_a + n_c:]
    if holdout >= n_a:
        raise ValueError("holdout must leave some r2 facts for training")
    f0 = {int(a): int(B[i % n_c]) for i, a in enumerate(A[rng.permutation(n_a)])}
    f1 = {int(b): int(c) for b, c in zip(B, rng.permutation(C))}
    r0 = [(a, 0, f0[a]) for a in sorted(f0)]
    r1 = [(b, 1, f1[b]) for b in sorted(f1)]
    r2 = [(a, 2, f1[f0[a]]) for a in sorted(f0)]
    order = rng.permutation(len(r2))
    held = [r2[i] for i in order[:holdout]]
    kept = [r2[i] for i in sorted(order[holdout:])]
    half = holdout // 2
    return MultiRelGraph.from_splits(
        num_entities, ["r0", "r1", "r2"], r0 + r1 + kept, held[:half], held[half:])


def random_kg(num_entities: int, num_relations: int, num_triples: int, seed: int = 0,
              valid_frac: float = 0.1, test_frac: float = 0.1) -> MultiRelGraph:
    """Uniformly random distinct triples, split at random."""
    rng = np.random.default_rng(seed)
    seen = set()
    rows = []
    limit = num_entities * num_entities * num_relations
    if num_triples > limit:
        raise ValueError("more triples requested than distinct triples exist")
    while len(rows) < num_triples:
        t = (int(rng.integers(num_entities)), int(rng.integers(num_relations)),
             int(rng.integers(num_entities)))
        if t not in seen:
            seen.add(t)
            rows.append(t)
    n_valid = int(round(valid_frac * num_triples))
    n_test = int(round(test_frac * num_triples))
    n_train = num_triples - n_valid - n_test
    return MultiRelGraph.from_splits(
        num_entities, num_relations, rows[:n_train], rows[n_train:n_train + n_valid],
        rows[n_train + n_valid:])


def clustered_kg(num_entities: int = 40, num_relations: int = 6, num_clusters: int = 4,
                 triples_per_entity: int = 4, seed: int = 0) -> MultiRelGraph:
    """KG where each relation maps every cluster to a fixed target cluster.

    Objects are drawn at random inside the target cluster, so facts are
    predictable up to the cluster but not memorisable from structure alone.
    """
    rng = np.random.default_rng(seed)
    cluster = np.arange(num_entities) % num_clusters
    members = [np.flatnonzero(cluster == c) for c in range(num_clusters)]
    target = rng.integers(num_clusters, size=(num_relations, num_clusters))
    seen, rows = set(), []
    for s in range(num_entities):
        for _ in range(triples_per_entity):
            r = int(rng.integers(num_relations))
            o = int(rng.choice(members[target[r, cluster[s]]]))
            if (s, r, o) not in seen:
                seen.add((s, r, o))
                rows.append((s, r, o))
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    n_hold = max(2, len(rows) // 10)
    return MultiRelGraph.from_splits(
        num_entities, num_relations, rows[2 * n_hold:], rows[:n_hold], rows[n_hold:2 * n_hold])


def two_cluster_graph(nodes_per_cluster: int = 20, seed: int = 0, p_in: float = 0.25,
                      p_out: float = 0.02):
    """Relational graph with two communities; returns ``(graph, labels)``.

    Intra-community edges use relations ``r0``/``r1``, cross edges ``r2``.
    """
    rng = np.random.default_rng(seed)
    n = 2 * nodes_per_cluster
    labels = np.repeat([0, 1], nodes_per_cluster)
    rows = []
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            if labels[u] == labels[v] and rng.random() < p_in:
                rows.append((u, int(labels[u]), v))
            elif labels[u] != labels[v] and rng.random() < p_out:
                rows.append((u, 2, v))
    return MultiRelGraph.from_splits(n, ["r0", "r1", "r2"], rows), labels


def relation_presence_graphs(num_graphs: int = 100, seed: int = 0, min_nodes: int = 6,
                             max_nodes: int = 12, num_relations: int = 4):
    """Graph-classification set where the label says whether relation 1 occurs.

    Returns a list of ``(num_nodes, triples, node_types, label)`` with a single
    node type.  Negative graphs never use relation 1; positive graphs contain
    at least one relation-1 edge.
    """
    rng = np.random.default_rng(seed)
    others = [r for r in range(num_relations) if r != 1]
    out = []
    for i in range(num_graphs):
        label = i % 2
        n = int(rng.integers(min_nodes, max_nodes + 1))
        n_edges = int(rng.integers(n, 2 * n))
        seen, rows = set(), []
        while len(rows) < n_edges:
            u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
            r = int(rng.choice(others))
            if (u, r, v) not in seen:
                seen.add((u, r, v))
                rows.append((u, r, v))
        if label:
            for _ in range(int(rng.integers(1, 3))):
                u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
                if (u, 1, v) not in seen:
                    seen.add((u, 1, v))
                    rows.append((u, 1, v))
        out.append((n, rows, np.zeros(n, dtype=np.int64), label))
    order = rng.permutation(num_graphs)
    return [out[i] for i in order]
