"""Edge-list file format, synthetic DAG families, dataset statistics.

The one on-disk graph format:

    # n=<n> d=<d>
    <u> <v>            one line per edge, u -> v
    F <v> <r1> ... <rd> optional per-node feature rows

Feature rows may be omitted; missing nodes default to all-zero
features. Everything else about a graph is derived, so this format
round-trips losslessly (the writer emits full-precision floats).

Generated families are deterministic in their 64-bit seed via
SplitMix64: TREE (random recursive tree under an out-degree cap),
LAYERED (nodes split into layers, edges only from lower to higher
layers), CHAIN (a single path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dag import Dag, build_dag, compute_depth
from .errors import InvalidSpec, ParseError
from .reachability import UNBOUNDED, build_index, stats
from .rng import SplitMix64

FAMILIES = ("TREE", "LAYERED", "CHAIN")


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    n: int
    seed: int = 0
    feature_dim: int = 1
    max_outdegree: int = 2
    layers: int = 4
    layer_width: int = 0
    edge_prob: float = 0.3

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")
        if self.n < 1:
            raise InvalidSpec(f"n must be >= 1, got {self.n}")
        if self.feature_dim < 1:
            raise InvalidSpec(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.family == "TREE" and self.max_outdegree < 1:
            raise InvalidSpec("TREE needs max_outdegree >= 1")
        if self.family == "LAYERED":
            if self.layers < 1:
                raise InvalidSpec("LAYERED needs layers >= 1")
            if not (0.0 <= self.edge_prob <= 1.0):
                raise InvalidSpec(f"edge_prob must be in [0, 1], got {self.edge_prob}")
            if self.layer_width < 0:
                raise InvalidSpec("layer_width must be >= 0 (0 means derive from layers)")


def gen(spec: GeneratorSpec) -> Dag:
    """Generate a validated Dag; the same spec always yields the same
    graph, bit for bit."""
    spec.validate()
    rng = SplitMix64(spec.seed)
    if spec.family == "CHAIN":
        edges = [(i, i + 1) for i in range(spec.n - 1)]
    elif spec.family == "TREE":
        edges = _gen_tree(rng, spec.n, spec.max_outdegree)
    else:
        edges = _gen_layered(rng, spec.n, spec.layers, spec.layer_width, spec.edge_prob)
    feats = np.array(
        [rng.uniform(-1.0, 1.0) for _ in range(spec.n * spec.feature_dim)]
    ).reshape(spec.n, spec.feature_dim)
    return build_dag(spec.n, edges, feats)


def _gen_tree(rng: SplitMix64, n: int, cap: int) -> list[tuple[int, int]]:
    # Each new node attaches to a uniformly random earlier node that
    # still has out-degree below the cap (swap-remove keeps this O(n)).
    edges = []
    outdeg = [0] * n
    avail = [0]
    for child in range(1, n):
        pick = rng.randint(len(avail))
        parent = avail[pick]
        edges.append((parent, child))
        outdeg[parent] += 1
        if outdeg[parent] == cap:
            avail[pick] = avail[-1]
            avail.pop()
        avail.append(child)
    return edges


def _gen_layered(rng, n, layers, layer_width, edge_prob) -> list[tuple[int, int]]:
    width = layer_width if layer_width else -(-n // layers)
    if width * layers < n:
        raise InvalidSpec(f"layers={layers} x layer_width={width} cannot hold n={n} nodes")
    layer = [v // width for v in range(n)]
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if layer[u] < layer[v] and rng.random() < edge_prob:
                edges.append((u, v))
    return edges


def save_edge_list(g: Dag, path) -> None:
    """Inverse of load_edge_list. Feature rows are written for every
    node with repr() floats, so reloading reproduces the Dag exactly."""
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} d={g.feature_dim}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")
        for v in range(g.n):
            row = " ".join(repr(float(x)) for x in g.features[v])
            fh.write(f"F {v} {row}\n")


def load_edge_list(path) -> Dag:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        toks = header.split()
        if len(toks) != 3 or toks[0] != "#":
            raise ParseError(1, f"expected header '# n=<n> d=<d>', got {header!r}")
        try:
            n = int(toks[1].removeprefix("n="))
            d = int(toks[2].removeprefix("d="))
        except ValueError:
            raise ParseError(1, f"bad header {header!r}") from None
        if n < 0 or d < 1:
            raise ParseError(1, f"invalid sizes n={n} d={d}")
        edges: list[tuple[int, int]] = []
        feats = np.zeros((n, d))
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if toks[0] == "F":
                if len(toks) != 2 + d:
                    raise ParseError(line_no, f"feature row needs {d} values")
                try:
                    v = int(toks[1])
                    feats[v] = [float(t) for t in toks[2:]]
                except (ValueError, IndexError):
                    raise ParseError(line_no, f"bad feature row {line!r}") from None
                continue
            if len(toks) != 2:
                raise ParseError(line_no, f"expected '<u> <v>', got {line!r}")
            try:
                edges.append((int(toks[0]), int(toks[1])))
            except ValueError:
                raise ParseError(line_no, f"non-integer edge {line!r}") from None
    return build_dag(n, edges, feats)


def dataset_stats(g: Dag, k=UNBOUNDED) -> dict:
    """The structural quantities that drive the attention cost model:
    node and edge counts, depth, max out-degree, and the average
    receptive-field size at bound k."""
    idx = build_index(g, k)
    s = stats(idx)
    return {
        "n": g.n,
        "num_edges": g.num_edges,
        "dag_depth": compute_depth(g).dag_depth,
        "max_outdegree": g.max_outdegree(),
        "k": "inf" if k == UNBOUNDED else int(k),
        "avg_n_k": s["avg_n_k"],
        "avg_n_k_display": s["avg_n_k_display"],
        "max_n_k": s["max_n_k"],
    }


def format_stats_text(report: dict) -> str:
    rows = [
        ("nodes", report["n"]),
        ("edges", report["num_edges"]),
        ("dag depth", report["dag_depth"]),
        ("max outdegree", report["max_outdegree"]),
        ("k", report["k"]),
        ("avg n_k", report["avg_n_k_display"]),
        ("max n_k", report["max_n_k"]),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def format_stats_kv(report: dict) -> str:
    keys = ["n", "num_edges", "dag_depth", "max_outdegree", "k", "avg_n_k_display", "max_n_k"]
    names = {"avg_n_k_display": "avg_n_k"}
    return "\n".join(f"{names.get(key, key)}={report[key]}" for key in keys)
