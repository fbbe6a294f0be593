"""Portable seeded random streams.

Every random draw in the package goes through :class:`Stream`, which reads
raw 64-bit words from the PCG64 bit generator (PCG-XSL-RR 128/64, O'Neill
2014) and derives uniforms, integers and normals from them with fixed
arithmetic. Only the raw word sequence of the bit generator is relied upon;
numpy's distribution methods are not, since their streams are not stable
across numpy releases.

Reference output (``Stream(1).raw(3)``)::

    9441442522235856127 17532960557476522086 2659275481604167885
"""

from __future__ import annotations

import math
from typing import Sequence, TypeVar

import numpy as np

T = TypeVar("T")

_INV_2_53 = 1.0 / (1 << 53)
_BUF = 512


class Stream:
    """A deterministic random stream identified by ``(seed, *key)``."""

    def __init__(self, seed: int, *key: int):
        seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        if key:
            ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
            self._bits = np.random.PCG64(ss)
        else:
            self._bits = np.random.PCG64(seed)
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        self._buf: list[int] = []

    def spawn(self, *key: int) -> "Stream":
        """Independent child stream; depends only on the seed and key."""
        return Stream(self.seed, *(self.key + key))

    def raw(self, n: int) -> np.ndarray:
        """``n`` raw uint64 words (bypasses the scalar buffer)."""
        return self._bits.random_raw(n)

    def _word(self) -> int:
        if not self._buf:
            self._buf = self._bits.random_raw(_BUF).tolist()[::-1]
        return self._buf.pop()

    # scalar draws -----------------------------------------------------

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self._word() >> 11) * _INV_2_53

    def randint(self, high: int) -> int:
        """Uniform integer in [0, high)."""
        if high <= 0:
            raise ValueError("high must be positive")
        return min(int(self.random() * high), high - 1)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller; consumes exactly two words per call."""
        u1 = 1.0 - self.random()
        u2 = self.random()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def expovariate(self, mean: float) -> float:
        return -mean * math.log(1.0 - self.random())

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.randint(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def weighted_index(self, weights: Sequence[float]) -> int:
        total = float(sum(weights))
        x = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if x < acc:
                return i
        return len(weights) - 1

    # vector draws -----------------------------------------------------

    def random_array(self, size) -> np.ndarray:
        n = int(np.prod(size))
        words = self._bits.random_raw(n) if n else np.zeros(0, dtype=np.uint64)
        return ((words >> np.uint64(11)).astype(np.float64) * _INV_2_53).reshape(size)

    def integers(self, high, size) -> np.ndarray:
        """Uniform integers in [0, high); ``high`` may broadcast against ``size``."""
        u = self.random_array(size)
        high = np.asarray(high)
        out = np.floor(u * high).astype(np.int64)
        return np.minimum(out, high - 1)
