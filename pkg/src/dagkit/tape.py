"""Minimal reverse-mode autodiff on a linear tape.

Forward computations record one entry per primitive (op name, input
ids, constant attributes, output value). backward() walks the entries
in reverse, applying each primitive's hand-derived adjoint and
accumulating vector-Jacobian products per value id. Finite differences
never appear here; grad_check uses them only as a test oracle.

The primitive set is deliberately small: dense linear algebra, a masked
row softmax, and the segment (gather / scatter-add / per-segment
softmax) ops that let attention aggregate over ragged receptive fields
without ever touching an n x n array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import UnregisteredPrimitive
from .rng import SplitMix64


class Ref(NamedTuple):
    """Handle to a value on a tape."""

    id: int


@dataclass(frozen=True)
class Primitive:
    forward: Callable
    adjoint: Callable | None


_PRIMITIVES: dict[str, Primitive] = {}


def register_primitive(name: str, forward, adjoint=None) -> None:
    """Add an op to the registry. `forward(inputs, attrs) -> ndarray`;
    `adjoint(grad, out, inputs, attrs) -> list of per-input grads`."""
    _PRIMITIVES[name] = Primitive(forward, adjoint)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives

register_primitive(
    "matmul",
    lambda ins, at: ins[0] @ ins[1],
    lambda g, y, ins, at: [g @ ins[1].T, ins[0].T @ g],
)

register_primitive(
    "transpose",
    lambda ins, at: ins[0].T,
    lambda g, y, ins, at: [g.T],
)

register_primitive(
    "add",
    lambda ins, at: ins[0] + ins[1],
    lambda g, y, ins, at: [_unbroadcast(g, ins[0].shape), _unbroadcast(g, ins[1].shape)],
)

register_primitive(
    "sub",
    lambda ins, at: ins[0] - ins[1],
    lambda g, y, ins, at: [_unbroadcast(g, ins[0].shape), _unbroadcast(-g, ins[1].shape)],
)

register_primitive(
    "mul",
    lambda ins, at: ins[0] * ins[1],
    lambda g, y, ins, at: [
        _unbroadcast(g * ins[1], ins[0].shape),
        _unbroadcast(g * ins[0], ins[1].shape),
    ],
)

register_primitive(
    "scale",
    lambda ins, at: at["c"] * ins[0],
    lambda g, y, ins, at: [at["c"] * g],
)

register_primitive(
    "relu",
    lambda ins, at: np.maximum(ins[0], 0.0),
    lambda g, y, ins, at: [g * (ins[0] > 0.0)],
)

register_primitive(
    "exp",
    lambda ins, at: np.exp(ins[0]),
    lambda g, y, ins, at: [g * y],
)


def _fwd_masked_softmax(ins, at):
    # softmax(scale * logits + mask) per row, stabilized by the row max.
    # Built in place: only one n x n buffer beyond the inputs.
    z = ins[0] * at["scale"]
    z += at["mask"]
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _adj_masked_softmax(g, y, ins, at):
    t = (g * y).sum(axis=1, keepdims=True)
    return [at["scale"] * y * (g - t)]


register_primitive("masked_softmax_rows", _fwd_masked_softmax, _adj_masked_softmax)


def _fwd_segment_softmax(ins, at):
    # Softmax within contiguous segments of a (P, 1) score column.
    # Segments must be non-empty; `starts` are reduceat offsets and
    # `seg` maps each row to its segment id.
    x = ins[0][:, 0]
    starts, seg = at["starts"], at["seg"]
    m = np.maximum.reduceat(x, starts)
    e = np.exp(x - m[seg])
    s = np.add.reduceat(e, starts)
    return (e / s[seg])[:, None]


def _adj_segment_softmax(g, y, ins, at):
    starts, seg = at["starts"], at["seg"]
    gy = (g * y)[:, 0]
    t = np.add.reduceat(gy, starts)
    return [(y[:, 0] * (g[:, 0] - t[seg]))[:, None]]


register_primitive("segment_softmax", _fwd_segment_softmax, _adj_segment_softmax)


def _adj_gather_rows(g, y, ins, at):
    dx = np.zeros_like(ins[0])
    np.add.at(dx, at["idx"], g)
    return [dx]


register_primitive(
    "gather_rows",
    lambda ins, at: ins[0][at["idx"]],
    _adj_gather_rows,
)

register_primitive(
    "segment_sum",
    lambda ins, at: np.add.reduceat(ins[0], at["starts"], axis=0),
    lambda g, y, ins, at: [g[at["seg"]]],
)

register_primitive(
    "rowsum",
    lambda ins, at: ins[0].sum(axis=1, keepdims=True),
    lambda g, y, ins, at: [np.broadcast_to(g, ins[0].shape)],
)


def _fwd_layer_norm(ins, at):
    x = ins[0]
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + at["eps"])


def _adj_layer_norm(g, y, ins, at):
    x = ins[0]
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + at["eps"])
    gm = g.mean(axis=1, keepdims=True)
    gym = (g * y).mean(axis=1, keepdims=True)
    return [inv * (g - gm - y * gym)]


register_primitive("layer_norm_rows", _fwd_layer_norm, _adj_layer_norm)


def _adj_concat_cols(g, y, ins, at):
    grads = []
    off = 0
    for x in ins:
        w = x.shape[1]
        grads.append(g[:, off : off + w])
        off += w
    return grads


register_primitive(
    "concat_cols",
    lambda ins, at: np.concatenate(ins, axis=1),
    _adj_concat_cols,
)

register_primitive(
    "mean_rows",
    lambda ins, at: ins[0].mean(axis=0, keepdims=True),
    lambda g, y, ins, at: [np.broadcast_to(g / ins[0].shape[0], ins[0].shape)],
)

register_primitive(
    "sum_all",
    lambda ins, at: np.asarray(ins[0].sum()),
    lambda g, y, ins, at: [np.broadcast_to(g, ins[0].shape)],
)


# --------------------------------------------------------------------- tape


class _Entry(NamedTuple):
    op: str
    out: int
    ins: tuple[int, ...]
    attrs: dict


@dataclass
class Tape:
    """Ordered record of primitive applications over stored values."""

    values: list[np.ndarray] = field(default_factory=list)
    entries: list[_Entry] = field(default_factory=list)
    n_leaves: int = 0

    def leaf(self, value) -> Ref:
        """Register an input or parameter array (no producing entry)."""
        self.values.append(np.asarray(value, dtype=np.float64))
        self.n_leaves += 1
        return Ref(len(self.values) - 1)

    def value(self, ref: Ref) -> np.ndarray:
        return self.values[ref.id]

    def apply(self, op: str, *refs: Ref, **attrs) -> Ref:
        if op not in _PRIMITIVES:
            raise UnregisteredPrimitive(f"unknown primitive {op!r}")
        ins = [self.values[r.id] for r in refs]
        out = _PRIMITIVES[op].forward(ins, attrs)
        self.values.append(out)
        self.entries.append(_Entry(op, len(self.values) - 1, tuple(r.id for r in refs), attrs))
        return Ref(len(self.values) - 1)

    # Thin wrappers so calling code reads like array math.
    def matmul(self, a, b):
        return self.apply("matmul", a, b)

    def transpose(self, a):
        return self.apply("transpose", a)

    def add(self, a, b):
        return self.apply("add", a, b)

    def sub(self, a, b):
        return self.apply("sub", a, b)

    def mul(self, a, b):
        return self.apply("mul", a, b)

    def scale(self, a, c: float):
        return self.apply("scale", a, c=float(c))

    def relu(self, a):
        return self.apply("relu", a)

    def exp(self, a):
        return self.apply("exp", a)

    def masked_softmax_rows(self, logits, mask, scale=1.0):
        return self.apply("masked_softmax_rows", logits, mask=mask, scale=float(scale))

    def segment_softmax(self, scores, starts, seg):
        return self.apply("segment_softmax", scores, starts=starts, seg=seg)

    def gather_rows(self, x, idx):
        return self.apply("gather_rows", x, idx=idx)

    def segment_sum(self, x, starts, seg):
        return self.apply("segment_sum", x, starts=starts, seg=seg)

    def rowsum(self, x):
        return self.apply("rowsum", x)

    def layer_norm_rows(self, x, eps=1e-5):
        return self.apply("layer_norm_rows", x, eps=float(eps))

    def concat_cols(self, xs):
        return self.apply("concat_cols", *xs)

    def mean_rows(self, x):
        return self.apply("mean_rows", x)

    def sum_all(self, x):
        return self.apply("sum_all", x)


class Gradients:
    """Gradient lookup for every value id reached by backward()."""

    def __init__(self, store: dict[int, np.ndarray], tape: Tape):
        self._store = store
        self._tape = tape

    def of(self, ref: Ref) -> np.ndarray:
        g = self._store.get(ref.id)
        if g is None:
            return np.zeros_like(self._tape.values[ref.id])
        return g


def backward(tape: Tape, loss: Ref, seed=None) -> Gradients:
    """Accumulate adjoints in reverse order of the tape.

    `seed` defaults to ones with the loss's shape (i.e. d(loss)/d(loss)
    for a scalar loss)."""
    if seed is None:
        seed = np.ones_like(tape.values[loss.id])
    store: dict[int, np.ndarray] = {loss.id: np.asarray(seed, dtype=np.float64)}
    for entry in reversed(tape.entries):
        g = store.get(entry.out)
        if g is None:
            continue
        prim = _PRIMITIVES.get(entry.op)
        if prim is None or prim.adjoint is None:
            raise UnregisteredPrimitive(f"no adjoint registered for {entry.op!r}")
        ins = [tape.values[i] for i in entry.ins]
        in_grads = prim.adjoint(g, tape.values[entry.out], ins, entry.attrs)
        for i, gi in zip(entry.ins, in_grads):
            prev = store.get(i)
            store[i] = gi if prev is None else prev + gi
    return Gradients(store, tape)


def replay(tape: Tape) -> bool:
    """Re-run every entry from its recorded inputs; True iff each result
    is bitwise identical to the recorded output."""
    for entry in tape.entries:
        prim = _PRIMITIVES.get(entry.op)
        if prim is None:
            raise UnregisteredPrimitive(f"unknown primitive {entry.op!r}")
        ins = [tape.values[i] for i in entry.ins]
        out = prim.forward(ins, entry.attrs)
        if not np.array_equal(out, tape.values[entry.out]):
            return False
    return True


def grad_check(f, params, h: float = 1e-5, sample: int = 200, seed: int = 0) -> float:
    """Max relative error between f's analytic gradient and central
    finite differences.

    `f(params) -> (loss, grads)` with grads matching the param shapes.
    Checks a random subsample of coordinates (all of them when the total
    is below `sample`); relative error uses the denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    _, grads = f(params)
    base = [np.asarray(p, dtype=np.float64) for p in params]
    sizes = [p.size for p in base]
    total = sum(sizes)
    rng = SplitMix64(seed)
    count = min(sample, total)
    chosen: set[int] = set()
    while len(chosen) < count:
        chosen.add(rng.randint(total))
    max_err = 0.0
    for flat in sorted(chosen):
        pi, off = 0, flat
        while off >= sizes[pi]:
            off -= sizes[pi]
            pi += 1
        plus = [p.copy() for p in base]
        minus = [p.copy() for p in base]
        plus[pi].flat[off] += h
        minus[pi].flat[off] -= h
        numeric = (f(plus)[0] - f(minus)[0]) / (2.0 * h)
        analytic = float(np.asarray(grads[pi]).flat[off])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        max_err = max(max_err, err)
    return max_err
