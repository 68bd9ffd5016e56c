"""Reachability-restricted multi-head attention with two backends.

Dense: softmax(Q K^T / sqrt(d_k) + M) V with an additive mask blocking
pairs outside each node's receptive field. Sparse: the same attention
computed by message passing, gathering keys and values only for the
pairs the index allows, so nothing of size n x n is ever built and the
per-layer work is proportional to the total receptive-field size.

Both backends record onto a Tape, share the same parameters, and agree
elementwise to floating-point accumulation error; tests pin that at
1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dag import Dag, compute_depth
from .encoding import depth_encoding
from .errors import NonFiniteInput
from .params import TransformerStack
from .reachability import ReachabilityIndex, dense_mask
from .tape import Ref, Tape

LN_EPS = 1e-5


def exp_kernel(q_row: np.ndarray, k_row: np.ndarray, d_k: int) -> float:
    """exp(<q, k> / sqrt(d_k)) for already-projected rows. Strictly
    positive; this is the unnormalized attention weight both backends
    assign to a pair."""
    return float(np.exp(np.dot(q_row, k_row) / math.sqrt(d_k)))


@dataclass(frozen=True)
class SparsePlan:
    """Flattened attention pairs: row p says source node src[p] feeds
    target node seg[p]. seg is sorted ascending; every node owns at
    least one pair, so reduceat segments are never empty."""

    n: int
    seg: np.ndarray
    src: np.ndarray
    starts: np.ndarray

    @property
    def num_pairs(self) -> int:
        return int(self.seg.shape[0])


def sparse_plan(idx: ReachabilityIndex, include_self: bool = True) -> SparsePlan:
    seg: list[int] = []
    src: list[int] = []
    sizes = np.empty(idx.n, dtype=np.int64)
    for v, nbrs in enumerate(idx.neighbors):
        row = sorted(nbrs + (v,)) if include_self else list(nbrs)
        if not row:
            raise ValueError(
                f"node {v} has an empty attention target set; include_self is required"
            )
        seg.extend([v] * len(row))
        src.extend(row)
        sizes[v] = len(row)
    starts = np.zeros(idx.n, dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])
    return SparsePlan(
        n=idx.n,
        seg=np.asarray(seg, dtype=np.int64),
        src=np.asarray(src, dtype=np.int64),
        starts=starts,
    )


def make_reach(idx: ReachabilityIndex, backend: str, include_self: bool = True):
    """Backend-specific reachability structure: an additive mask for
    `dense`, a SparsePlan for `sparse`."""
    if backend == "dense":
        return dense_mask(idx, include_self=include_self)
    if backend == "sparse":
        return sparse_plan(idx, include_self=include_self)
    raise ValueError(f"unknown backend {backend!r}")


class _AggStats:
    """Counts receptive-field pairs aggregated by the sparse backend,
    one increment per attention layer call. Lets benchmarks assert the
    claimed work bound without memory introspection."""

    def __init__(self):
        self.pairs = 0

    def reset(self):
        self.pairs = 0


AGG = _AggStats()


# ------------------------------------------------------------- bound params


@dataclass
class BoundAttention:
    w_q: list[Ref]
    w_k: list[Ref]
    w_v: list[Ref]
    w_o: Ref
    d_k: int


@dataclass
class BoundBlock:
    attn: BoundAttention
    ffn_w1: Ref
    ffn_b1: Ref
    ffn_w2: Ref
    ffn_b2: Ref
    norm1_scale: Ref
    norm1_shift: Ref
    norm2_scale: Ref
    norm2_shift: Ref


@dataclass
class BoundStack:
    input_proj: Ref
    blocks: list[BoundBlock]
    head_w: Ref
    head_b: Ref
    d_model: int


def bind_attention(tape: Tape, a) -> BoundAttention:
    """Register one attention layer's arrays as tape leaves; per-head
    projection slices become separate 2-d leaves."""
    return BoundAttention(
        w_q=[tape.leaf(a.w_q[h]) for h in range(a.heads)],
        w_k=[tape.leaf(a.w_k[h]) for h in range(a.heads)],
        w_v=[tape.leaf(a.w_v[h]) for h in range(a.heads)],
        w_o=tape.leaf(a.w_o),
        d_k=a.d_k,
    )


def bind_stack(tape: Tape, stack: TransformerStack) -> BoundStack:
    """Register every parameter array of the stack as a tape leaf."""
    blocks = []
    for blk in stack.blocks:
        blocks.append(
            BoundBlock(
                attn=bind_attention(tape, blk.attn),
                ffn_w1=tape.leaf(blk.ffn_w1),
                ffn_b1=tape.leaf(blk.ffn_b1),
                ffn_w2=tape.leaf(blk.ffn_w2),
                ffn_b2=tape.leaf(blk.ffn_b2),
                norm1_scale=tape.leaf(blk.norm1_scale),
                norm1_shift=tape.leaf(blk.norm1_shift),
                norm2_scale=tape.leaf(blk.norm2_scale),
                norm2_shift=tape.leaf(blk.norm2_shift),
            )
        )
    return BoundStack(
        input_proj=tape.leaf(stack.input_proj),
        blocks=blocks,
        head_w=tape.leaf(stack.head_w),
        head_b=tape.leaf(stack.head_b),
        d_model=stack.d_model,
    )


def collect_grads(grads, bound: BoundStack) -> dict[str, np.ndarray]:
    """Gradients keyed like TransformerStack.named_arrays(); per-head
    slices are restacked into the (heads, d_model, d_k) layout."""
    out = {"input_proj": grads.of(bound.input_proj)}
    for b, blk in enumerate(bound.blocks):
        p = f"blocks.{b}."
        out[p + "attn.w_q"] = np.stack([grads.of(r) for r in blk.attn.w_q])
        out[p + "attn.w_k"] = np.stack([grads.of(r) for r in blk.attn.w_k])
        out[p + "attn.w_v"] = np.stack([grads.of(r) for r in blk.attn.w_v])
        out[p + "attn.w_o"] = grads.of(blk.attn.w_o)
        out[p + "ffn_w1"] = grads.of(blk.ffn_w1)
        out[p + "ffn_b1"] = grads.of(blk.ffn_b1)
        out[p + "ffn_w2"] = grads.of(blk.ffn_w2)
        out[p + "ffn_b2"] = grads.of(blk.ffn_b2)
        out[p + "norm1_scale"] = grads.of(blk.norm1_scale)
        out[p + "norm1_shift"] = grads.of(blk.norm1_shift)
        out[p + "norm2_scale"] = grads.of(blk.norm2_scale)
        out[p + "norm2_shift"] = grads.of(blk.norm2_shift)
    out["head_w"] = grads.of(bound.head_w)
    out["head_b"] = grads.of(bound.head_b)
    return out


# ----------------------------------------------------------------- forward


def _require_finite(x: np.ndarray) -> None:
    if not np.isfinite(x).all():
        raise NonFiniteInput("attention input contains NaN or Inf")


def attention_dense(tape: Tape, x: Ref, attn: BoundAttention, mask: np.ndarray) -> Ref:
    """Masked softmax attention over the full n x n logit matrix."""
    _require_finite(tape.value(x))
    inv = 1.0 / math.sqrt(attn.d_k)
    heads_out = []
    for h in range(len(attn.w_q)):
        q = tape.matmul(x, attn.w_q[h])
        k = tape.matmul(x, attn.w_k[h])
        v = tape.matmul(x, attn.w_v[h])
        logits = tape.matmul(q, tape.transpose(k))
        weights = tape.masked_softmax_rows(logits, mask=mask, scale=inv)
        heads_out.append(tape.matmul(weights, v))
    cat = heads_out[0] if len(heads_out) == 1 else tape.concat_cols(heads_out)
    return tape.matmul(cat, attn.w_o)


def attention_sparse(tape: Tape, x: Ref, attn: BoundAttention, plan: SparsePlan) -> Ref:
    """Message-passing attention: per pair, score the gathered query and
    key rows, softmax within each target's segment, scatter the weighted
    values back. Work is O(num_pairs * d) per head."""
    _require_finite(tape.value(x))
    AGG.pairs += plan.num_pairs
    inv = 1.0 / math.sqrt(attn.d_k)
    heads_out = []
    for h in range(len(attn.w_q)):
        q = tape.matmul(x, attn.w_q[h])
        k = tape.matmul(x, attn.w_k[h])
        v = tape.matmul(x, attn.w_v[h])
        qg = tape.gather_rows(q, idx=plan.seg)
        kg = tape.gather_rows(k, idx=plan.src)
        scores = tape.scale(tape.rowsum(tape.mul(qg, kg)), inv)
        weights = tape.segment_softmax(scores, starts=plan.starts, seg=plan.seg)
        vg = tape.gather_rows(v, idx=plan.src)
        heads_out.append(
            tape.segment_sum(tape.mul(vg, weights), starts=plan.starts, seg=plan.seg)
        )
    cat = heads_out[0] if len(heads_out) == 1 else tape.concat_cols(heads_out)
    return tape.matmul(cat, attn.w_o)


def _attention(tape, x, attn, reach) -> Ref:
    if isinstance(reach, SparsePlan):
        return attention_sparse(tape, x, attn, reach)
    return attention_dense(tape, x, attn, reach)


def block_forward(tape: Tape, x: Ref, blk: BoundBlock, reach) -> Ref:
    """Attention and feed-forward sub-layers, each wrapped as
    normalize(residual + sublayer) with a learned affine after the
    per-row standardization."""
    a = _attention(tape, x, blk.attn, reach)
    y = tape.layer_norm_rows(tape.add(x, a), eps=LN_EPS)
    y = tape.add(tape.mul(y, blk.norm1_scale), blk.norm1_shift)
    hidden = tape.relu(tape.add(tape.matmul(y, blk.ffn_w1), blk.ffn_b1))
    f = tape.add(tape.matmul(hidden, blk.ffn_w2), blk.ffn_b2)
    z = tape.layer_norm_rows(tape.add(y, f), eps=LN_EPS)
    return tape.add(tape.mul(z, blk.norm2_scale), blk.norm2_shift)


def readout(tape: Tape, x: Ref, mode: str = "mean", sinks=None) -> Ref:
    """Graph-level aggregation: arithmetic mean over all nodes, or over
    sink nodes only (a DAG always has at least one sink)."""
    if mode == "mean":
        return tape.mean_rows(x)
    if mode == "sinks":
        if not sinks:
            raise ValueError("sinks readout needs a non-empty sink list")
        return tape.mean_rows(tape.gather_rows(x, idx=np.asarray(sinks, dtype=np.int64)))
    raise ValueError(f"unknown readout mode {mode!r}")


def stack_forward(
    tape: Tape,
    g: Dag,
    bound: BoundStack,
    reach,
    pe_on: bool = True,
    task: str = "node",
    readout_mode: str = "mean",
    features_ref: Ref | None = None,
) -> Ref:
    """Full model: input projection, optional depth encoding added once,
    the block sequence, then the task head. Node task returns n x d_out,
    graph task reads out first and returns 1 x d_out."""
    feats = tape.leaf(g.features) if features_ref is None else features_ref
    h = tape.matmul(feats, bound.input_proj)
    if pe_on:
        enc = depth_encoding(compute_depth(g), bound.d_model)
        h = tape.add(h, tape.leaf(enc.pe))
    for blk in bound.blocks:
        h = block_forward(tape, h, blk, reach)
    if task == "graph":
        h = readout(tape, h, readout_mode, sinks=g.sinks())
    elif task != "node":
        raise ValueError(f"unknown task {task!r}")
    return tape.add(tape.matmul(h, bound.head_w), bound.head_b)


def run_stack(
    g: Dag,
    stack: TransformerStack,
    idx: ReachabilityIndex,
    backend: str = "sparse",
    pe_on: bool = True,
    task: str = "node",
    readout_mode: str = "mean",
) -> np.ndarray:
    """Forward-only convenience wrapper; builds a fresh tape and returns
    the output array."""
    tape = Tape()
    bound = bind_stack(tape, stack)
    reach = make_reach(idx, backend)
    out = stack_forward(tape, g, bound, reach, pe_on=pe_on, task=task, readout_mode=readout_mode)
    return tape.value(out)
