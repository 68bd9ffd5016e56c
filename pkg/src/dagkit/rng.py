"""Portable seeded randomness.

Everything that draws random numbers in this package (graph generation,
weight init, batch shuffling) goes through SplitMix64 so that a seed
fully determines the output, independent of numpy version or platform.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64 generator (Steele, Lea, Flood 2014).

    State advances by the golden-ratio increment; each output is a
    finalized mix of the state. Period 2^64.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1), 53-bit resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is < n / 2^64."""
        if n <= 0:
            raise ValueError("randint requires n >= 1")
        return self.next_u64() % n

    def normal(self) -> float:
        """Standard normal via Box-Muller. Two uniforms per draw, no cached
        spare, so the stream position is a pure function of call count."""
        u1 = self.random()
        u2 = self.random()
        while u1 <= 0.0:
            u1 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self) -> "SplitMix64":
        """Child generator seeded from this stream."""
        return SplitMix64(self.next_u64())
