"""Receptive fields under bounded reachability.

For each node v the index stores the set of nodes that can reach v or be
reached from v along directed paths of at most k edges, v itself
excluded. k may be UNBOUNDED (full reachability in both directions).

Construction runs one forward and one backward breadth-first search per
node, each cut off at depth k, so the whole index costs O(|E| * |V|) in
the worst case and can be treated as a one-off preprocessing step.
"""

from __future__ import annotations

import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction

import numpy as np

from .dag import Dag
from .errors import ParseError

UNBOUNDED = math.inf

# Additive mask sentinel. Finite so that 0 * blocked stays 0 downstream;
# exp(-1e30 - rowmax) underflows to exactly 0.0 in float64.
MASK_BLOCK = -1e30


@dataclass(frozen=True)
class ReachabilityIndex:
    """Per-node receptive fields N_k(v) plus summary statistics."""

    k: float
    neighbors: tuple[tuple[int, ...], ...]
    n_k_sizes: np.ndarray
    avg_n_k: float

    @property
    def n(self) -> int:
        return len(self.neighbors)


def _bfs_limited(adj, start: int, limit) -> list[int]:
    """Nodes reachable from `start` within `limit` hops, start excluded."""
    seen = {start}
    out = []
    frontier = deque([start])
    depth = 0
    while frontier and depth < limit:
        depth += 1
        for _ in range(len(frontier)):
            u = frontier.popleft()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    out.append(w)
                    frontier.append(w)
    return out


def _node_field(g: Dag, v: int, k) -> tuple[int, ...]:
    fwd = _bfs_limited(g.fwd_adj, v, k)
    bwd = _bfs_limited(g.bwd_adj, v, k)
    return tuple(sorted(set(fwd) | set(bwd)))


def build_index(g: Dag, k=UNBOUNDED, workers: int = 1) -> ReachabilityIndex:
    """Build the receptive-field index for bound k (>= 1 or UNBOUNDED).

    Per-node searches are independent, so `workers` > 1 may compute them
    in any schedule; results are assembled by node id either way.
    """
    if k != UNBOUNDED and (not float(k).is_integer() or k < 1):
        raise ValueError(f"k must be a positive integer or UNBOUNDED, got {k!r}")
    if workers > 1 and g.n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            neighbors = tuple(pool.map(lambda v: _node_field(g, v, k), range(g.n)))
    else:
        neighbors = tuple(_node_field(g, v, k) for v in range(g.n))
    sizes = np.array([len(nb) for nb in neighbors], dtype=np.int64)
    avg = float(sizes.sum() / g.n) if g.n else 0.0
    return ReachabilityIndex(k=k, neighbors=neighbors, n_k_sizes=sizes, avg_n_k=avg)


def default_workers() -> int:
    """Worker count from DAGKIT_THREADS, else all cores."""
    env = os.environ.get("DAGKIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def dense_mask(idx: ReachabilityIndex, include_self: bool = True) -> np.ndarray:
    """Additive n x n attention mask: 0 where attention is allowed,
    MASK_BLOCK where it is not. Symmetric because the fields are.

    include_self keeps the diagonal open even though v is not a member
    of its own receptive field; attention needs at least the self pair
    to stay well-defined on isolated nodes.
    """
    n = idx.n
    m = np.full((n, n), MASK_BLOCK)
    for v, nbrs in enumerate(idx.neighbors):
        if nbrs:
            m[v, list(nbrs)] = 0.0
    if include_self:
        np.fill_diagonal(m, 0.0)
    return m


def stats(idx: ReachabilityIndex) -> dict:
    """Summary of receptive-field sizes.

    The average is computed as an exact rational and rounded to two
    decimals for the display string; `avg_n_k` itself stays a float.
    """
    n = idx.n
    total = int(idx.n_k_sizes.sum()) if n else 0
    avg = Fraction(total, n) if n else Fraction(0)
    display = str(
        (Decimal(avg.numerator) / Decimal(avg.denominator)).quantize(
            Decimal("0.01"), rounding=ROUND_HALF_EVEN
        )
    )
    hist: dict[int, int] = {}
    for s in idx.n_k_sizes.tolist():
        hist[s] = hist.get(s, 0) + 1
    return {
        "avg_n_k": float(avg),
        "avg_n_k_display": display,
        "max_n_k": int(idx.n_k_sizes.max()) if n else 0,
        "histogram": dict(sorted(hist.items())),
    }


def _format_k(k) -> str:
    return "inf" if k == UNBOUNDED else str(int(k))


def save_index(idx: ReachabilityIndex, path) -> None:
    """Write the text format:

        DAGREACH v1 n=<n> k=<k|inf>
        <v>: <sorted comma-separated neighbor ids>

    One line per node; empty fields produce a bare `<v>:` line.
    """
    with open(path, "w") as fh:
        fh.write(f"DAGREACH v1 n={idx.n} k={_format_k(idx.k)}\n")
        for v, nbrs in enumerate(idx.neighbors):
            if nbrs:
                fh.write(f"{v}: {','.join(map(str, nbrs))}\n")
            else:
                fh.write(f"{v}:\n")


def load_index(path) -> ReachabilityIndex:
    """Inverse of save_index; round-trips bit-exactly."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 4 or parts[0] != "DAGREACH" or parts[1] != "v1":
            raise ParseError(1, f"bad header {header!r}")
        try:
            n = int(parts[2].removeprefix("n="))
            k_str = parts[3].removeprefix("k=")
            k = UNBOUNDED if k_str == "inf" else int(k_str)
        except ValueError as exc:
            raise ParseError(1, str(exc)) from None
        neighbors: list[tuple[int, ...]] = []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            head, _, rest = line.partition(":")
            try:
                v = int(head)
            except ValueError:
                raise ParseError(line_no, f"bad node id {head!r}") from None
            if v != len(neighbors):
                raise ParseError(line_no, f"expected node {len(neighbors)}, got {v}")
            rest = rest.strip()
            nbrs = tuple(int(t) for t in rest.split(",")) if rest else ()
            neighbors.append(nbrs)
        if len(neighbors) != n:
            raise ParseError(1, f"header claims n={n}, found {len(neighbors)} rows")
    sizes = np.array([len(nb) for nb in neighbors], dtype=np.int64)
    avg = float(sizes.sum() / n) if n else 0.0
    return ReachabilityIndex(
        k=k, neighbors=tuple(neighbors), n_k_sizes=sizes, avg_n_k=avg
    )
