"""Command-line interface.

Exit codes: 0 success, 1 domain error (invalid graph, failed check,
divergence), 2 usage error. Every subcommand that draws randomness
takes an explicit --seed, so runs are reproducible from the command
line alone.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .attention import run_stack
from .dag import compute_depth
from .data_io import (
    GeneratorSpec,
    dataset_stats,
    format_stats_kv,
    format_stats_text,
    gen,
    load_edge_list,
)
from .errors import DagKitError
from .params import init_stack, load_checkpoint, save_checkpoint, stack_from_named
from .ppr import support_check
from .reachability import UNBOUNDED, build_index, default_workers, save_index
from .rng import SplitMix64
from .tape import grad_check
from .trainer import TaskSpec, TrainConfig, format_history, make_labels, train


def _parse_k(text: str):
    if text in ("inf", "INF", "Inf"):
        return UNBOUNDED
    return int(text)


def _add_k(parser, default="inf"):
    parser.add_argument("--k", type=_parse_k, default=_parse_k(default), help="reachability bound, integer or 'inf'")


def cmd_validate(args) -> int:
    g = load_edge_list(args.file)
    depth = compute_depth(g).dag_depth
    print(f"ok n={g.n} edges={g.num_edges} depth={depth} max_outdegree={g.max_outdegree()}")
    return 0


def cmd_stats(args) -> int:
    g = load_edge_list(args.file)
    report = dataset_stats(g, args.k)
    print(format_stats_text(report))
    print(format_stats_kv(report))
    return 0


def cmd_reach(args) -> int:
    g = load_edge_list(args.file)
    idx = build_index(g, args.k, workers=default_workers())
    save_index(idx, args.out)
    print(f"wrote {args.out} (n={idx.n}, avg_n_k={idx.avg_n_k:.2f})")
    return 0


def cmd_forward(args) -> int:
    g = load_edge_list(args.file)
    stack = load_checkpoint(args.ckpt)
    idx = build_index(g, args.k)
    out = run_stack(
        g,
        stack,
        idx,
        backend=args.backend,
        pe_on=not args.no_pe,
        task=args.task,
        readout_mode=args.readout,
    )
    for row in np.atleast_2d(out):
        print(" ".join(repr(float(x)) for x in row))
    return 0


def _parse_gen(text: str) -> tuple[dict, int, int]:
    """FAMILY,key=value,... with extras: count=<graphs>, n=<int|lo:hi>."""
    parts = text.split(",")
    family = parts[0].upper()
    kwargs: dict = {"family": family}
    count, n_lo, n_hi = 1, 8, 8
    for part in parts[1:]:
        key, _, value = part.partition("=")
        if key == "count":
            count = int(value)
        elif key == "n":
            if ":" in value:
                lo, hi = value.split(":")
                n_lo, n_hi = int(lo), int(hi)
            else:
                n_lo = n_hi = int(value)
        elif key == "d":
            kwargs["feature_dim"] = int(value)
        elif key == "edge_prob":
            kwargs["edge_prob"] = float(value)
        elif key in ("seed", "max_outdegree", "layers", "layer_width"):
            kwargs[key] = int(value)
        else:
            raise DagKitError(f"unknown generator key {key!r}")
    return kwargs, count, (n_lo, n_hi)


def _gen_graphs(spec_text: str):
    kwargs, count, (n_lo, n_hi) = _parse_gen(spec_text)
    seed = kwargs.pop("seed", 0)
    size_rng = SplitMix64(seed ^ 0x9E3779B97F4A7C15)
    graphs = []
    for i in range(count):
        n = n_lo if n_lo == n_hi else n_lo + size_rng.randint(n_hi - n_lo + 1)
        graphs.append(gen(GeneratorSpec(n=n, seed=seed + i, **kwargs)))
    return graphs


def _read_cfg(path) -> tuple[TrainConfig, TaskSpec]:
    cfg_kwargs: dict = {}
    task_kwargs: dict = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DagKitError(f"cfg line {line_no}: expected key=value, got {line!r}")
        key, value = key.strip(), value.strip()
        if key == "task":
            task_kwargs["task"] = value
        elif key == "train_frac":
            task_kwargs["train_frac"] = float(value)
        elif key == "split_seed":
            task_kwargs["split_seed"] = int(value)
        elif key == "k":
            cfg_kwargs["k"] = _parse_k(value)
        elif key in ("lr", "weight_decay"):
            cfg_kwargs[key] = float(value)
        elif key in ("epochs", "batch_size", "blocks", "d_model", "heads", "seed"):
            cfg_kwargs[key] = int(value)
        elif key == "pe_on":
            cfg_kwargs["pe_on"] = value.lower() in ("1", "true", "yes", "on")
        elif key in ("backend", "schedule"):
            cfg_kwargs[key] = value
        else:
            raise DagKitError(f"cfg line {line_no}: unknown key {key!r}")
    return TrainConfig(**cfg_kwargs), TaskSpec(**task_kwargs)


def cmd_train(args) -> int:
    if bool(args.gen) == bool(args.data):
        raise DagKitError("provide exactly one of --gen or --data")
    if args.gen:
        graphs = _gen_graphs(args.gen)
    else:
        files = sorted(Path(args.data).glob("*.txt"))
        if not files:
            raise DagKitError(f"no *.txt graphs under {args.data}")
        graphs = [load_edge_list(f) for f in files]
    cfg, task_spec = _read_cfg(args.cfg)
    result = train(graphs, cfg, task_spec)
    Path(args.out_history).write_text(format_history(result.history) + "\n")
    save_checkpoint(args.out_ckpt, result.params)
    final = result.history[-1]
    print(
        f"epochs={final[0]} train_mse={final[1]:.6f} val_mse={final[2]:.6f} "
        f"baseline_val_mse={result.baseline_val_mse:.6f}"
    )
    print(f"wrote {args.out_history} and {args.out_ckpt}")
    return 0


def cmd_ppr_check(args) -> int:
    g = load_edge_list(args.file)
    res = support_check(g, args.root, args.alpha)
    zero = "{" + ",".join(map(str, res["zero_set"])) + "}"
    if res["ok"]:
        print(f"ok=true zero_set={zero}")
        return 0
    print(f"ok=false witness={res['witness']} zero_set={zero}")
    return 1


def cmd_gradcheck(args) -> int:
    rng = SplitMix64(args.seed)
    g = gen(
        GeneratorSpec(
            family="LAYERED", n=12, seed=rng.next_u64(), feature_dim=3, layers=4, edge_prob=0.4
        )
    )
    idx = build_index(g, UNBOUNDED)
    stack = init_stack(args.seed, d_in=3, d_model=args.dmodel, n_blocks=args.blocks, heads=2)
    names = [name for name, _ in stack.named_arrays()]
    target = make_labels(g, "NODE_DESCENDANT_COUNT")

    def loss_fn(arrays):
        from .attention import bind_stack, collect_grads, make_reach, stack_forward
        from .tape import Tape, backward

        s = stack_from_named(list(zip(names, arrays)))
        tape = Tape()
        bound = bind_stack(tape, s)
        out = stack_forward(tape, g, bound, make_reach(idx, "sparse"), pe_on=True, task="node")
        diff = tape.sub(out, tape.leaf(target))
        loss = tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / target.size)
        grads = backward(tape, loss)
        by_name = collect_grads(grads, bound)
        return float(tape.value(loss)), [by_name[n] for n in names]

    err = grad_check(loss_fn, [a for _, a in stack.named_arrays()], h=1e-5, sample=200, seed=args.seed)
    print(f"max_rel_error={err:.3e}")
    return 0 if err < 1e-5 else 1


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")] if getattr(args, "sizes", None) else None
    if args.bench_cmd == "bound":
        failures = 0
        for i in range(args.count):
            spec = GeneratorSpec(
                family="TREE",
                n=2 + SplitMix64(args.seed + i).randint(args.n - 1),
                seed=args.seed + i,
                max_outdegree=args.max_outdegree,
            )
            res = bench_mod.bound_check_tree(spec, args.k)
            if not res["ok"]:
                failures += 1
                print(f"FAIL n={res['n']} sum={res['sum_fields']} bound={res['bound']}")
        print(f"checked={args.count} failures={failures}")
        return 0 if failures == 0 else 1
    if args.bench_cmd == "scale":
        report = bench_mod.scaling_curve(
            args.family, sizes, k=args.k, backend=args.backend, repeats=args.repeats, seed=args.seed
        )
        print(bench_mod.format_scaling_text(report))
        print(bench_mod.format_scaling_kv(report))
        if args.csv:
            Path(args.csv).write_text(bench_mod.format_scaling_csv(report) + "\n")
        return 0
    if args.bench_cmd == "crossover":
        report = bench_mod.backend_crossover(
            args.family, sizes, k=args.k, repeats=args.repeats, seed=args.seed
        )
        print(bench_mod.format_crossover_text(report))
        return 0
    raise DagKitError(f"unknown bench subcommand {args.bench_cmd!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagkit", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="parse and validate an edge-list file")
    p.add_argument("file")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("stats", help="dataset statistics incl. avg receptive-field size")
    p.add_argument("file")
    _add_k(p)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("reach", help="build and serialize a reachability index")
    p.add_argument("file")
    _add_k(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reach)

    p = sub.add_parser("forward", help="run a checkpointed stack over a graph")
    p.add_argument("file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--backend", choices=("dense", "sparse"), default="sparse")
    _add_k(p)
    p.add_argument("--no-pe", action="store_true")
    p.add_argument("--task", choices=("node", "graph"), default="node")
    p.add_argument("--readout", choices=("mean", "sinks"), default="mean")
    p.set_defaults(fn=cmd_forward)

    p = sub.add_parser("train", help="train on generated or on-disk graphs")
    p.add_argument("--gen", help="FAMILY,count=...,n=<int|lo:hi>,seed=...,d=...,...")
    p.add_argument("--data", help="directory of edge-list *.txt files")
    p.add_argument("--cfg", required=True, help="key=value training config file")
    p.add_argument("--out-history", default="history.csv")
    p.add_argument("--out-ckpt", default="model.ckpt")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ppr-check", help="verify the walk-support property at a root")
    p.add_argument("file")
    p.add_argument("--root", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.15)
    p.set_defaults(fn=cmd_ppr_check)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full stack")
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--dmodel", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", help="complexity checks and timings")
    bsub = p.add_subparsers(dest="bench_cmd", required=True)

    pb = bsub.add_parser("bound", help="tree receptive-field bound")
    pb.add_argument("--n", type=int, default=512, help="max tree size")
    pb.add_argument("--count", type=int, default=100)
    pb.add_argument("--max-outdegree", type=int, default=2)
    _add_k(pb)
    pb.add_argument("--seed", type=int, default=0)
    pb.set_defaults(fn=cmd_bench)

    ps = bsub.add_parser("scale", help="layer-forward scaling curve")
    ps.add_argument("--family", choices=("TREE", "CHAIN", "LAYERED"), default="TREE")
    ps.add_argument("--sizes", default="256,512,1024,2048,4096,8192")
    _add_k(ps)
    ps.add_argument("--backend", choices=("dense", "sparse"), default="sparse")
    ps.add_argument("--repeats", type=int, default=3)
    ps.add_argument("--seed", type=int, default=7)
    ps.add_argument("--csv", help="also write rows as CSV")
    ps.set_defaults(fn=cmd_bench)

    pc = bsub.add_parser("crossover", help="dense vs sparse side by side")
    pc.add_argument("--family", choices=("TREE", "CHAIN", "LAYERED"), default="TREE")
    pc.add_argument("--sizes", default="256,512,1024,2048")
    _add_k(pc)
    pc.add_argument("--repeats", type=int, default=3)
    pc.add_argument("--seed", type=int, default=7)
    pc.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DagKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
