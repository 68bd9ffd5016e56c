"""Executable checks of the cost model.

Three probes: the tree bound on total receptive-field size
(sum over v of |N_k(v)| <= |V| * min(k, depth) * max-outdegree), wall
clock scaling of one attention layer against graph size, and the
dense-versus-sparse crossover. Timings use median-of-repeats with a
discarded warmup; index construction is timed separately because it is
one-off preprocessing. Benchmarks run single-threaded unless
DAGKIT_THREADS says otherwise.
"""

from __future__ import annotations

import contextlib
import gc
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .attention import AGG, attention_dense, attention_sparse, bind_attention, make_reach
from .dag import compute_depth
from .data_io import GeneratorSpec, gen
from .params import init_attention
from .reachability import UNBOUNDED, build_index
from .rng import SplitMix64
from .tape import Tape


def _bench_threads() -> int:
    return max(1, int(os.environ.get("DAGKIT_THREADS", "1")))


@contextlib.contextmanager
def _quiet_timing():
    """Pin BLAS to the bench worker budget and pause the GC, so medians
    reflect the computation and not scheduler or collector noise."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        threadpool_limits = None
    gc_was_on = gc.isenabled()
    gc.disable()
    try:
        if threadpool_limits is not None:
            with threadpool_limits(limits=_bench_threads()):
                yield
        else:
            yield
    finally:
        if gc_was_on:
            gc.enable()
        gc.collect()


def bound_check_tree(spec: GeneratorSpec, k=UNBOUNDED) -> dict:
    """Exact receptive-field total for a generated tree versus the
    bound |V| * min(k, depth) * max-outdegree."""
    if spec.family != "TREE":
        raise ValueError("bound_check_tree applies to the TREE family")
    g = gen(spec)
    idx = build_index(g, k)
    depth = compute_depth(g).dag_depth
    eff_k = depth if k == UNBOUNDED else min(int(k), depth)
    bound = g.n * eff_k * g.max_outdegree()
    total = int(idx.n_k_sizes.sum())
    return {"n": g.n, "sum_fields": total, "bound": bound, "ok": total <= bound}


def _random_inputs(seed: int, n: int, d_model: int) -> np.ndarray:
    rng = SplitMix64(seed)
    return np.array([rng.uniform(-1.0, 1.0) for _ in range(n * d_model)]).reshape(n, d_model)


def _make_graph(family: str, n: int, seed: int):
    if family == "TREE":
        return gen(GeneratorSpec(family="TREE", n=n, seed=seed, max_outdegree=2))
    if family == "CHAIN":
        return gen(GeneratorSpec(family="CHAIN", n=n, seed=seed))
    if family == "LAYERED":
        return gen(
            GeneratorSpec(family="LAYERED", n=n, seed=seed, layers=max(2, n // 8), edge_prob=0.2)
        )
    raise ValueError(f"unknown family {family!r}")


def _time_layer(g, reach, params, x, backend: str, repeats: int) -> tuple[float, np.ndarray]:
    """Median seconds for one attention layer forward; the warmup run is
    discarded but its output is returned for equivalence checks. Sparse
    runs also assert the aggregation counter: exactly one count per
    receptive-field pair, nothing n x n behind the scenes."""
    out = None
    times = []
    with _quiet_timing():
        for r in range(repeats + 1):
            tape = Tape()
            bound = bind_attention(tape, params)
            x_ref = tape.leaf(x)
            AGG.reset()
            t0 = time.perf_counter()
            if backend == "dense":
                y = attention_dense(tape, x_ref, bound, reach)
            else:
                y = attention_sparse(tape, x_ref, bound, reach)
            elapsed = time.perf_counter() - t0
            if backend == "sparse" and AGG.pairs != reach.num_pairs:
                raise AssertionError(
                    f"aggregation count {AGG.pairs} != receptive-field pairs {reach.num_pairs}"
                )
            if r == 0:
                out = tape.value(y).copy()
            else:
                times.append(elapsed)
    return float(np.median(times)), out


@dataclass
class ScalingRow:
    n: int
    median_s: float
    sum_fields: int
    index_s: float


def fit_loglog_slope(ns, ts) -> float:
    """Least-squares slope of log t against log n."""
    lx = np.log(np.asarray(ns, dtype=float))
    ly = np.log(np.asarray(ts, dtype=float))
    lx = lx - lx.mean()
    return float((lx * (ly - ly.mean())).sum() / (lx * lx).sum())


def scaling_curve(
    family: str,
    sizes: list[int],
    k=UNBOUNDED,
    backend: str = "sparse",
    repeats: int = 3,
    d_model: int = 16,
    heads: int = 1,
    seed: int = 7,
) -> dict:
    """Median layer-forward time per size, plus the fitted log-log slope
    (overall and between consecutive sizes)."""
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    params = init_attention(SplitMix64(seed), d_model, heads)
    rows = []
    for n in sizes:
        g = _make_graph(family, n, seed + n)
        t0 = time.perf_counter()
        idx = build_index(g, k)
        index_s = time.perf_counter() - t0
        reach = make_reach(idx, backend)
        x = _random_inputs(seed ^ n, n, d_model)
        median_s, _ = _time_layer(g, reach, params, x, backend, repeats)
        rows.append(
            ScalingRow(n=n, median_s=median_s, sum_fields=int(idx.n_k_sizes.sum()), index_s=index_s)
        )
    ns = [r.n for r in rows]
    ts = [r.median_s for r in rows]
    pair_slopes = [
        math.log(ts[i + 1] / ts[i]) / math.log(ns[i + 1] / ns[i]) for i in range(len(ns) - 1)
    ]
    return {
        "backend": backend,
        "rows": rows,
        "slope": fit_loglog_slope(ns, ts),
        "pair_slopes": pair_slopes,
    }


def backend_crossover(
    family: str,
    sizes: list[int],
    k=UNBOUNDED,
    repeats: int = 3,
    d_model: int = 16,
    heads: int = 1,
    seed: int = 7,
) -> dict:
    """Side-by-side timings; reports the smallest size where the sparse
    backend wins by at least 2x (None if it never does). Every size also
    cross-checks that the two backends produce the same output."""
    params = init_attention(SplitMix64(seed), d_model, heads)
    rows = []
    crossover_n = None
    for n in sizes:
        g = _make_graph(family, n, seed + n)
        idx = build_index(g, k)
        mask = make_reach(idx, "dense")
        plan = make_reach(idx, "sparse")
        x = _random_inputs(seed ^ n, n, d_model)
        dense_s, dense_out = _time_layer(g, mask, params, x, "dense", repeats)
        sparse_s, sparse_out = _time_layer(g, plan, params, x, "sparse", repeats)
        max_diff = float(np.abs(dense_out - sparse_out).max())
        if max_diff > 1e-8:
            raise AssertionError(f"backend outputs diverge at n={n}: max diff {max_diff}")
        rows.append({"n": n, "dense_s": dense_s, "sparse_s": sparse_s, "max_diff": max_diff})
        if crossover_n is None and sparse_s * 2.0 <= dense_s:
            crossover_n = n
    return {"rows": rows, "crossover_n": crossover_n}


def format_scaling_text(report: dict) -> str:
    lines = [f"backend={report['backend']} slope={report['slope']:.3f}"]
    lines.append(f"{'n':>8} {'median_s':>12} {'sum_fields':>12} {'index_s':>10}")
    for r in report["rows"]:
        lines.append(f"{r.n:>8} {r.median_s:>12.6f} {r.sum_fields:>12} {r.index_s:>10.4f}")
    return "\n".join(lines)


def format_scaling_kv(report: dict) -> str:
    lines = [f"backend={report['backend']}", f"slope={report['slope']:.6f}"]
    for r in report["rows"]:
        lines.append(f"n={r.n} median_s={r.median_s:.9f} sum_fields={r.sum_fields} index_s={r.index_s:.6f}")
    return "\n".join(lines)


def format_scaling_csv(report: dict) -> str:
    lines = ["n,median_s,sum_fields,index_s"]
    for r in report["rows"]:
        lines.append(f"{r.n},{r.median_s!r},{r.sum_fields},{r.index_s!r}")
    return "\n".join(lines)


def format_crossover_text(report: dict) -> str:
    lines = [f"{'n':>8} {'dense_s':>12} {'sparse_s':>12} {'speedup':>9}"]
    for r in report["rows"]:
        speedup = r["dense_s"] / r["sparse_s"] if r["sparse_s"] > 0 else float("inf")
        lines.append(f"{r['n']:>8} {r['dense_s']:>12.6f} {r['sparse_s']:>12.6f} {speedup:>9.2f}")
    lines.append(f"crossover_n={report['crossover_n']}")
    return "\n".join(lines)
