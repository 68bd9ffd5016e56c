"""Shared test fixtures: random graph builders and independent oracles.

The oracles deliberately use different algorithms than the library:
reachability via boolean matrix powering, depth via exhaustive path
enumeration, so agreement is meaningful.
"""

import numpy as np

from dagkit.dag import Dag, build_dag
from dagkit.reachability import UNBOUNDED
from dagkit.rng import SplitMix64


def random_dag(seed, max_n=30, edge_prob=None, d=3, scramble=False) -> Dag:
    """Random DAG: draw n, include each forward pair (u, v), u < v, with
    probability edge_prob (default ~3/n so big graphs stay sparse), then
    optionally relabel by a random permutation."""
    rng = SplitMix64(seed)
    n = 1 + rng.randint(max_n)
    p = edge_prob if edge_prob is not None else min(0.35, 3.0 / n)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v))
    if scramble and n > 1:
        perm = list(range(n))
        rng.shuffle(perm)
        edges = [(perm[u], perm[v]) for u, v in edges]
    feats = np.array([rng.uniform(-1.0, 1.0) for _ in range(n * d)]).reshape(n, d)
    return build_dag(n, edges, feats)


def single_source_dag(seed, n, extra_edges=4, d=3) -> Dag:
    """Connected DAG with exactly one source: a random tree plus a few
    extra forward edges into non-root nodes."""
    rng = SplitMix64(seed)
    edges = set()
    for child in range(1, n):
        edges.add((rng.randint(child), child))
    added = 0
    while added < extra_edges and n > 2:
        u = rng.randint(n - 1)
        v = u + 1 + rng.randint(n - 1 - u)
        if (u, v) not in edges:
            edges.add((u, v))
            added += 1
    feats = np.array([rng.uniform(-1.0, 1.0) for _ in range(n * d)]).reshape(n, d)
    return build_dag(n, sorted(edges), feats)


def closure_oracle(g: Dag, k) -> list[set]:
    """Receptive fields by boolean matrix powering: OR the first
    min(k, n-1) powers of the adjacency matrix, then union each node's
    row (descendants) with its column (ancestors), self excluded."""
    n = g.n
    a = (g.adjacency_matrix() > 0).astype(np.int64)
    steps = (n - 1) if k == UNBOUNDED else min(int(k), n - 1)
    reach = np.zeros((n, n), dtype=bool)
    p = np.eye(n, dtype=np.int64)
    for _ in range(steps):
        p = (p @ a > 0).astype(np.int64)
        reach |= p.astype(bool)
    fields = []
    for v in range(n):
        fields.append((set(np.flatnonzero(reach[v])) | set(np.flatnonzero(reach[:, v]))) - {v})
    return fields


def brute_force_depth(g: Dag) -> list[int]:
    """Longest source-to-node path length by enumerating every directed
    path. Exponential; keep n small."""
    best = [0] * g.n

    def walk(v, length):
        if length > best[v]:
            best[v] = length
        for w in g.fwd_adj[v]:
            walk(w, length + 1)

    for s in range(g.n):
        if not g.bwd_adj[s]:
            walk(s, 0)
    return best


def diamond(features=None) -> Dag:
    return build_dag(4, [(0, 1), (0, 2), (1, 3), (2, 3)], features)


def chain(n, features=None) -> Dag:
    return build_dag(n, [(i, i + 1) for i in range(n - 1)], features)
