"""Immutable DAG representation plus the structural queries everything
else builds on: validation, topological order, longest-path depth,
edge reversal.

Node ids are dense integers 0..n-1. All tie-breaking is by ascending id,
so every derived quantity is bit-reproducible.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleDetected,
    DuplicateEdge,
    FeatureShapeMismatch,
    OutOfRangeNode,
    SelfLoop,
)


@dataclass(frozen=True)
class Dag:
    """Validated directed acyclic graph with node features.

    fwd_adj[v] lists v's out-neighbors, bwd_adj[v] its in-neighbors,
    both sorted ascending; the two are exact transposes. `features` is
    an n x d float64 matrix, marked read-only.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    fwd_adj: tuple[tuple[int, ...], ...]
    bwd_adj: tuple[tuple[int, ...], ...]
    features: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def sources(self) -> list[int]:
        return [v for v in range(self.n) if not self.bwd_adj[v]]

    def sinks(self) -> list[int]:
        return [v for v in range(self.n) if not self.fwd_adj[v]]

    def max_outdegree(self) -> int:
        return max((len(a) for a in self.fwd_adj), default=0) if self.n else 0

    def adjacency_matrix(self) -> np.ndarray:
        """Dense 0/1 matrix, row = source, column = target."""
        a = np.zeros((self.n, self.n))
        for u, v in self.edges:
            a[u, v] = 1.0
        return a


@dataclass(frozen=True)
class DepthVector:
    """Longest-path depth per node; sources sit at depth 0."""

    depth: np.ndarray
    dag_depth: int


def build_dag(n: int, edges, features=None) -> Dag:
    """Validate and construct a Dag.

    Raises OutOfRangeNode, SelfLoop, DuplicateEdge, CycleDetected or
    FeatureShapeMismatch. `features` defaults to an n x 1 zero matrix.
    """
    if n < 0:
        raise OutOfRangeNode(n, 0)
    edge_list: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    fwd: list[list[int]] = [[] for _ in range(n)]
    bwd: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n):
            raise OutOfRangeNode(u, n)
        if not (0 <= v < n):
            raise OutOfRangeNode(v, n)
        if u == v:
            raise SelfLoop(u)
        if (u, v) in seen:
            raise DuplicateEdge((u, v))
        seen.add((u, v))
        edge_list.append((u, v))
        fwd[u].append(v)
        bwd[v].append(u)

    _check_acyclic(n, fwd, bwd)

    if features is None:
        feats = np.zeros((n, 1))
    else:
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != n or feats.shape[1] < 1:
            raise FeatureShapeMismatch(
                f"features must be {n} x d with d >= 1, got shape {feats.shape}"
            )
        feats = feats.copy()
    feats.setflags(write=False)

    return Dag(
        n=n,
        edges=tuple(edge_list),
        fwd_adj=tuple(tuple(sorted(a)) for a in fwd),
        bwd_adj=tuple(tuple(sorted(a)) for a in bwd),
        features=feats,
    )


def _check_acyclic(n, fwd, bwd):
    """Kahn's algorithm; on failure, walk back through the leftover
    subgraph to produce one concrete cycle for the error message."""
    indeg = [len(b) for b in bwd]
    queue = [v for v in range(n) if indeg[v] == 0]
    done = 0
    while queue:
        u = queue.pop()
        done += 1
        for v in fwd[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if done == n:
        return
    remaining = {v for v in range(n) if indeg[v] > 0}
    start = min(remaining)
    trail, pos = [], {}
    v = start
    while v not in pos:
        pos[v] = len(trail)
        trail.append(v)
        v = next(u for u in bwd[v] if u in remaining)
    cycle = (trail[pos[v] :] + [v])[::-1]
    raise CycleDetected(cycle)


def topological_order(g: Dag) -> list[int]:
    """Kahn's algorithm with a min-heap, so equal-rank nodes come out in
    ascending id order and the result is unique."""
    indeg = [len(b) for b in g.bwd_adj]
    heap = [v for v in range(g.n) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in g.fwd_adj[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    return order


def compute_depth(g: Dag) -> DepthVector:
    """Longest path from any source, by DP along a topological order:
    depth(v) = 0 for sources, else 1 + max over in-neighbors."""
    depth = np.zeros(g.n, dtype=np.int64)
    for v in topological_order(g):
        preds = g.bwd_adj[v]
        if preds:
            depth[v] = 1 + max(depth[u] for u in preds)
    dag_depth = int(depth.max()) if g.n else 0
    return DepthVector(depth=depth, dag_depth=dag_depth)


def reverse(g: Dag) -> Dag:
    """Same nodes and features, every edge flipped."""
    return Dag(
        n=g.n,
        edges=tuple((v, u) for u, v in g.edges),
        fwd_adj=g.bwd_adj,
        bwd_adj=g.fwd_adj,
        features=g.features,
    )
