"""Sinusoidal positional encodings of node depth.

A node at depth p gets the classic transformer position vector
sin(p / 10000^(2i/d)) and cos(p / 10000^(2i/d)) interleaved across the
encoding dimension, so nodes at equal depth share a row. The encoding
is added once to the projected input features ahead of the first
attention block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dag import DepthVector
from .errors import ShapeMismatch


@dataclass(frozen=True)
class DepthEncoding:
    pe: np.ndarray
    d: int


def depth_encoding(depths: DepthVector, d: int) -> DepthEncoding:
    """Encoding matrix n x d from per-node depths.

    Even columns 2i carry the sine term, odd columns the cosine, both at
    frequency 1/10000^(2i/d). For odd d the final unpaired column is the
    sine term.
    """
    if d < 1:
        raise ValueError(f"encoding dimension must be >= 1, got {d}")
    pos = depths.depth.astype(np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, i / d)[None, :]
    pe = np.zeros((pos.shape[0], d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d // 2])
    return DepthEncoding(pe=pe, d=d)


def add_encoding(features: np.ndarray, enc: DepthEncoding) -> np.ndarray:
    """Elementwise sum of features and encoding rows."""
    if features.shape != enc.pe.shape:
        raise ShapeMismatch(
            f"features shape {features.shape} != encoding shape {enc.pe.shape}"
        )
    return features + enc.pe
