"""Learnable weights for the attention stack, their initialization, and
a binary checkpoint format (text manifest + little-endian float64 blob)
that round-trips bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .rng import SplitMix64

CKPT_MAGIC = "DAGCKPT v1"


@dataclass
class AttentionLayerParams:
    """Per-head projection weights. w_q/w_k/w_v have shape
    (heads, d_model, d_k); w_o maps the concatenated heads back to
    d_model with shape (heads * d_k, d_model)."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q.shape[2]

    @property
    def d_model(self) -> int:
        return self.w_q.shape[1]


@dataclass
class TransformerBlockParams:
    """Attention plus a two-layer feed-forward net (hidden width
    2 * d_model, relu), each sub-layer followed by a residual add and a
    learned-affine row normalization."""

    attn: AttentionLayerParams
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    norm1_scale: np.ndarray
    norm1_shift: np.ndarray
    norm2_scale: np.ndarray
    norm2_shift: np.ndarray


@dataclass
class TransformerStack:
    """Input projection, >= 1 transformer blocks, linear task head."""

    input_proj: np.ndarray
    blocks: list[TransformerBlockParams]
    head_w: np.ndarray
    head_b: np.ndarray

    @property
    def d_model(self) -> int:
        return self.input_proj.shape[1]

    @property
    def d_in(self) -> int:
        return self.input_proj.shape[0]

    @property
    def d_out(self) -> int:
        return self.head_w.shape[1]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Flat (name, array) list in a fixed order."""
        out = [("input_proj", self.input_proj)]
        for b, blk in enumerate(self.blocks):
            p = f"blocks.{b}."
            out += [
                (p + "attn.w_q", blk.attn.w_q),
                (p + "attn.w_k", blk.attn.w_k),
                (p + "attn.w_v", blk.attn.w_v),
                (p + "attn.w_o", blk.attn.w_o),
                (p + "ffn_w1", blk.ffn_w1),
                (p + "ffn_b1", blk.ffn_b1),
                (p + "ffn_w2", blk.ffn_w2),
                (p + "ffn_b2", blk.ffn_b2),
                (p + "norm1_scale", blk.norm1_scale),
                (p + "norm1_shift", blk.norm1_shift),
                (p + "norm2_scale", blk.norm2_scale),
                (p + "norm2_shift", blk.norm2_shift),
            ]
        out += [("head_w", self.head_w), ("head_b", self.head_b)]
        return out


def _normal_array(rng: SplitMix64, shape, scale: float) -> np.ndarray:
    flat = np.array([rng.normal() for _ in range(int(np.prod(shape)))])
    return (scale * flat).reshape(shape)


def init_attention(rng: SplitMix64, d_model: int, heads: int, d_k: int | None = None) -> AttentionLayerParams:
    if d_k is None:
        d_k = max(1, d_model // heads)
    s_in = 1.0 / np.sqrt(d_model)
    return AttentionLayerParams(
        w_q=_normal_array(rng, (heads, d_model, d_k), s_in),
        w_k=_normal_array(rng, (heads, d_model, d_k), s_in),
        w_v=_normal_array(rng, (heads, d_model, d_k), s_in),
        w_o=_normal_array(rng, (heads * d_k, d_model), 1.0 / np.sqrt(heads * d_k)),
    )


def init_block(rng: SplitMix64, d_model: int, heads: int, d_k: int | None = None) -> TransformerBlockParams:
    hidden = 2 * d_model
    return TransformerBlockParams(
        attn=init_attention(rng, d_model, heads, d_k),
        ffn_w1=_normal_array(rng, (d_model, hidden), 1.0 / np.sqrt(d_model)),
        ffn_b1=np.zeros(hidden),
        ffn_w2=_normal_array(rng, (hidden, d_model), 1.0 / np.sqrt(hidden)),
        ffn_b2=np.zeros(d_model),
        norm1_scale=np.ones(d_model),
        norm1_shift=np.zeros(d_model),
        norm2_scale=np.ones(d_model),
        norm2_shift=np.zeros(d_model),
    )


def init_stack(
    seed: int,
    d_in: int,
    d_model: int,
    n_blocks: int,
    heads: int = 1,
    d_out: int = 1,
    d_k: int | None = None,
) -> TransformerStack:
    if n_blocks < 1:
        raise ValueError("stack needs at least one block")
    rng = SplitMix64(seed)
    return TransformerStack(
        input_proj=_normal_array(rng, (d_in, d_model), 1.0 / np.sqrt(d_in)),
        blocks=[init_block(rng, d_model, heads, d_k) for _ in range(n_blocks)],
        head_w=_normal_array(rng, (d_model, d_out), 1.0 / np.sqrt(d_model)),
        head_b=np.zeros(d_out),
    )


def zero_like_stack(stack: TransformerStack) -> TransformerStack:
    """Same shapes, every weight zero; norm scales stay at one so the
    block reduces to plain row normalization."""
    pairs = {name: np.zeros_like(a) for name, a in stack.named_arrays()}
    for name in pairs:
        if name.endswith("norm1_scale") or name.endswith("norm2_scale"):
            pairs[name] = np.ones_like(pairs[name])
    return stack_from_named(list(pairs.items()))


def stack_from_named(pairs: list[tuple[str, np.ndarray]]) -> TransformerStack:
    """Rebuild a TransformerStack from its named_arrays() listing."""
    d = dict(pairs)
    n_blocks = 0
    while f"blocks.{n_blocks}.attn.w_q" in d:
        n_blocks += 1
    if n_blocks == 0 or "input_proj" not in d or "head_w" not in d:
        raise ParseError(0, "checkpoint does not describe a transformer stack")
    blocks = []
    for b in range(n_blocks):
        p = f"blocks.{b}."
        blocks.append(
            TransformerBlockParams(
                attn=AttentionLayerParams(
                    w_q=d[p + "attn.w_q"],
                    w_k=d[p + "attn.w_k"],
                    w_v=d[p + "attn.w_v"],
                    w_o=d[p + "attn.w_o"],
                ),
                ffn_w1=d[p + "ffn_w1"],
                ffn_b1=d[p + "ffn_b1"],
                ffn_w2=d[p + "ffn_w2"],
                ffn_b2=d[p + "ffn_b2"],
                norm1_scale=d[p + "norm1_scale"],
                norm1_shift=d[p + "norm1_shift"],
                norm2_scale=d[p + "norm2_scale"],
                norm2_shift=d[p + "norm2_shift"],
            )
        )
    return TransformerStack(
        input_proj=d["input_proj"], blocks=blocks, head_w=d["head_w"], head_b=d["head_b"]
    )


def save_checkpoint(path, stack: TransformerStack) -> None:
    """Text manifest (one `name dim0 dim1 ...` line per array) followed
    by every array's float64 data, little-endian, in manifest order."""
    pairs = stack.named_arrays()
    with open(path, "wb") as fh:
        lines = [f"{CKPT_MAGIC} {len(pairs)}"]
        for name, arr in pairs:
            lines.append(name + " " + " ".join(str(s) for s in arr.shape))
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for _, arr in pairs:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> TransformerStack:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").rstrip("\n")
        if not header.startswith(CKPT_MAGIC):
            raise ParseError(1, f"bad checkpoint header {header!r}")
        count = int(header[len(CKPT_MAGIC) :])
        manifest = []
        for line_no in range(2, 2 + count):
            toks = fh.readline().decode("ascii").split()
            if not toks:
                raise ParseError(line_no, "truncated manifest")
            manifest.append((toks[0], tuple(int(t) for t in toks[1:])))
        pairs = []
        for name, shape in manifest:
            nbytes = int(np.prod(shape)) * 8 if shape else 8
            buf = fh.read(nbytes)
            if len(buf) != nbytes:
                raise ParseError(0, f"truncated data for {name}")
            pairs.append((name, np.frombuffer(buf, dtype="<f8").reshape(shape).copy()))
    return stack_from_named(pairs)
