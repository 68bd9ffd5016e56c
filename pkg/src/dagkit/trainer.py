"""Desk-scale supervised training on synthetic structural targets.

Targets are exact functions of the graph (normalized descendant counts
per node, or normalized DAG depth per graph), so learning curves can be
judged against an exact mean-predictor baseline without any external
data. The loop runs the tape-based stack end to end: forward, reverse
accumulation, decoupled-weight-decay adaptive-moment updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import bind_stack, collect_grads, make_reach, stack_forward
from .dag import Dag, compute_depth, topological_order
from .errors import DivergenceDetected
from .params import TransformerStack, init_stack, stack_from_named
from .reachability import UNBOUNDED, build_index
from .rng import SplitMix64
from .tape import Tape, backward

TASKS = ("NODE_DESCENDANT_COUNT", "GRAPH_DEPTH_REGRESSION")


@dataclass(frozen=True)
class TaskSpec:
    task: str = "NODE_DESCENDANT_COUNT"
    loss: str = "MSE"
    train_frac: float = 0.8
    split_seed: int = 0

    @property
    def graph_level(self) -> bool:
        return self.task == "GRAPH_DEPTH_REGRESSION"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    blocks: int = 2
    d_model: int = 32
    heads: int = 2
    k: float = UNBOUNDED
    backend: str = "dense"
    pe_on: bool = True
    seed: int = 0
    weight_decay: float = 0.0
    schedule: str = "constant"


@dataclass
class TrainResult:
    history: list[tuple[int, float, float]]
    params: TransformerStack
    baseline_val_mse: float
    train_ids: list[int] = field(default_factory=list)
    val_ids: list[int] = field(default_factory=list)


def descendant_counts(g: Dag) -> np.ndarray:
    """|descendants(v)| per node, by bitset union along reverse
    topological order."""
    bits = [0] * g.n
    for v in reversed(topological_order(g)):
        acc = 0
        for c in g.fwd_adj[v]:
            acc |= bits[c] | (1 << c)
        bits[v] = acc
    return np.array([b.bit_count() for b in bits], dtype=np.int64)


def make_labels(g: Dag, task: str) -> np.ndarray:
    """Exact targets: descendant fraction per node (column vector), or
    the graph's depth over n as a 1 x 1 matrix."""
    if task == "NODE_DESCENDANT_COUNT":
        return (descendant_counts(g) / g.n).reshape(-1, 1)
    if task == "GRAPH_DEPTH_REGRESSION":
        return np.array([[compute_depth(g).dag_depth / g.n]])
    raise ValueError(f"unknown task {task!r}")


class AdamW:
    """Adaptive moments with decoupled weight decay:

        m <- b1 m + (1-b1) g         v <- b2 v + (1-b2) g^2
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta

    with the usual bias-corrected m_hat, v_hat."""

    def __init__(self, names, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: None for n in names}
        self.v = {n: None for n in names}

    def step(self, params: dict, grads: dict, lr_scale: float = 1.0) -> dict:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        lr = self.lr * lr_scale
        out = {}
        for name, theta in params.items():
            g = grads[name]
            m = g * (1 - self.b1) if self.m[name] is None else self.b1 * self.m[name] + (1 - self.b1) * g
            v = g * g * (1 - self.b2) if self.v[name] is None else self.b2 * self.v[name] + (1 - self.b2) * g * g
            self.m[name], self.v[name] = m, v
            out[name] = theta - lr * ((m / c1) / (np.sqrt(v / c2) + self.eps)) - lr * self.wd * theta
        return out


def _graph_loss_and_grads(g, stack, reach, target, cfg, task_spec):
    tape = Tape()
    bound = bind_stack(tape, stack)
    out = stack_forward(
        tape,
        g,
        bound,
        reach,
        pe_on=cfg.pe_on,
        task="graph" if task_spec.graph_level else "node",
    )
    diff = tape.sub(out, tape.leaf(target))
    loss = tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / target.size)
    grads = backward(tape, loss)
    return float(tape.value(loss)), collect_grads(grads, bound)


def evaluate_mse(graphs, reaches, targets, stack, cfg, task_spec) -> float:
    """Mean per-graph MSE, forward only."""
    total = 0.0
    for g, reach, y in zip(graphs, reaches, targets):
        tape = Tape()
        bound = bind_stack(tape, stack)
        out = stack_forward(
            tape, g, bound, reach,
            pe_on=cfg.pe_on,
            task="graph" if task_spec.graph_level else "node",
        )
        total += float(((tape.value(out) - y) ** 2).mean())
    return total / len(graphs)


def mean_predictor_mse(train_targets, val_targets) -> float:
    """Validation MSE of the constant predictor fitted on the training
    targets; the baseline any model has to beat."""
    mean = float(np.concatenate([t.ravel() for t in train_targets]).mean())
    errs = [float(((t - mean) ** 2).mean()) for t in val_targets]
    return sum(errs) / len(errs)


def train(data: list[Dag], cfg: TrainConfig, task_spec: TaskSpec = TaskSpec()) -> TrainResult:
    """Seeded, bit-reproducible training over a list of graphs.

    Receptive-field indexes are built once per graph up front
    (preprocessing); each epoch shuffles the training graphs, sums
    per-graph gradients within each mini-batch, and applies one
    optimizer step per batch. Raises DivergenceDetected the moment a
    loss stops being finite."""
    if not data:
        raise ValueError("train needs at least one graph")
    split_rng = SplitMix64(task_spec.split_seed)
    order = list(range(len(data)))
    split_rng.shuffle(order)
    if task_spec.train_frac >= 1.0:
        # No held-out graphs; validation reuses the training set.
        train_ids, val_ids = list(order), list(order)
    else:
        n_train = max(1, int(round(task_spec.train_frac * len(data))))
        if len(data) > 1:
            n_train = min(n_train, len(data) - 1)
        train_ids, val_ids = order[:n_train], order[n_train:] or order[:1]

    reaches = [make_reach(build_index(g, cfg.k), cfg.backend) for g in data]
    targets = [make_labels(g, task_spec.task) for g in data]

    stack = init_stack(
        cfg.seed,
        d_in=data[0].feature_dim,
        d_model=cfg.d_model,
        n_blocks=cfg.blocks,
        heads=cfg.heads,
        d_out=1,
    )
    params = dict(stack.named_arrays())
    opt = AdamW(params.keys(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    epoch_rng = SplitMix64(cfg.seed ^ 0xD1B54A32D192ED03)

    baseline = mean_predictor_mse(
        [targets[i] for i in train_ids], [targets[i] for i in val_ids]
    )

    history: list[tuple[int, float, float]] = []
    for epoch in range(1, cfg.epochs + 1):
        sched = 1.0
        if cfg.schedule == "cosine":
            sched = 0.5 * (1.0 + math.cos(math.pi * (epoch - 1) / cfg.epochs))
        ids = list(train_ids)
        epoch_rng.shuffle(ids)
        epoch_loss = 0.0
        for b0 in range(0, len(ids), cfg.batch_size):
            batch = ids[b0 : b0 + cfg.batch_size]
            acc = {name: np.zeros_like(a) for name, a in params.items()}
            batch_loss = 0.0
            for i in batch:
                loss, grads = _graph_loss_and_grads(
                    data[i], stack, reaches[i], targets[i], cfg, task_spec
                )
                batch_loss += loss
                for name in acc:
                    acc[name] += grads[name]
            if not math.isfinite(batch_loss):
                raise DivergenceDetected(
                    f"non-finite loss at epoch {epoch}",
                    state={"epoch": epoch, "batch_start": b0, "loss": batch_loss},
                )
            scale = 1.0 / len(batch)
            for name in acc:
                acc[name] *= scale
            params = opt.step(params, acc, lr_scale=sched)
            stack = stack_from_named(list(params.items()))
            epoch_loss += batch_loss
        train_loss = epoch_loss / len(ids)
        val_loss = evaluate_mse(
            [data[i] for i in val_ids],
            [reaches[i] for i in val_ids],
            [targets[i] for i in val_ids],
            stack,
            cfg,
            task_spec,
        )
        history.append((epoch, train_loss, val_loss))

    return TrainResult(
        history=history,
        params=stack,
        baseline_val_mse=baseline,
        train_ids=train_ids,
        val_ids=val_ids,
    )


def format_history(history) -> str:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, tr, va in history:
        lines.append(f"{epoch},{tr!r},{va!r}")
    return "\n".join(lines)
