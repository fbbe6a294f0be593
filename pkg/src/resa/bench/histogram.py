"""Log-bucketed latency histogram.

Bucket ``i`` (``0 <= i < N_BUCKETS``) has upper bound
``0.1 ms * 10 ** (i / 20)``, so there are 20 buckets per decade from 0.1 ms
to 60 s (117 finite bounds). Bucket 0 also takes everything at or below
0.1 ms; one overflow bucket takes anything above 60 s.
"""

from __future__ import annotations

import bisect
import math
from typing import Iterable, Mapping

import numpy as np

LOW_MS = 0.1
HIGH_MS = 60_000.0
PER_DECADE = 20
N_BUCKETS = int(math.ceil(PER_DECADE * math.log10(HIGH_MS / LOW_MS))) + 1
BOUNDS_MS = tuple(min(LOW_MS * 10 ** (i / PER_DECADE), HIGH_MS) for i in range(N_BUCKETS))


def bucket_of(ms: float) -> int:
    """Index of the first bucket whose upper bound is >= ``ms``; N_BUCKETS for overflow."""
    return bisect.bisect_left(BOUNDS_MS, ms)


def bucket_width(ms: float) -> float:
    i = min(bucket_of(ms), N_BUCKETS - 1)
    lo = BOUNDS_MS[i - 1] if i > 0 else 0.0
    return BOUNDS_MS[i] - lo


class LatencyHistogram:
    def __init__(self):
        self.counts = np.zeros(N_BUCKETS + 1, dtype=np.int64)
        self.n = 0
        self.total = 0.0
        self.min = math.inf
        self.max = -math.inf

    def record(self, ms: float) -> None:
        if ms < 0 or not math.isfinite(ms):
            raise ValueError("latency must be finite and non-negative")
        self.counts[bucket_of(ms)] += 1
        self.n += 1
        self.total += ms
        if ms < self.min:
            self.min = ms
        if ms > self.max:
            self.max = ms

    def record_many(self, values: Iterable[float]) -> None:
        for v in values:
            self.record(v)

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else 0.0

    def percentile(self, q: float) -> float:
        """Upper bound of the bucket holding the q-th percentile sample, clipped to [min, max]."""
        if not 0.0 <= q <= 100.0:
            raise ValueError("q must lie in [0, 100]")
        if self.n == 0:
            return 0.0
        rank = max(1, math.ceil(q / 100.0 * self.n))
        i = int(np.searchsorted(np.cumsum(self.counts), rank))
        upper = BOUNDS_MS[i] if i < N_BUCKETS else self.max
        return float(min(max(upper, self.min), self.max))

    def merge(self, other: "LatencyHistogram") -> "LatencyHistogram":
        self.counts += other.counts
        self.n += other.n
        self.total += other.total
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)
        return self

    def summary(self) -> dict:
        return {
            "count": self.n,
            "mean_ms": self.mean,
            "min_ms": self.min if self.n else 0.0,
            "max_ms": self.max if self.n else 0.0,
            "p50_ms": self.percentile(50),
            "p95_ms": self.percentile(95),
            "p99_ms": self.percentile(99),
        }

    def to_dict(self) -> dict:
        nz = {str(i): int(c) for i, c in enumerate(self.counts) if c}
        return {"counts": nz, "n": self.n, "total_ms": self.total,
                "min_ms": self.min if self.n else None, "max_ms": self.max if self.n else None}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LatencyHistogram":
        h = cls()
        for i, c in d.get("counts", {}).items():
            h.counts[int(i)] = c
        h.n = int(d.get("n", 0))
        h.total = float(d.get("total_ms", 0.0))
        if h.n:
            h.min, h.max = float(d["min_ms"]), float(d["max_ms"])
        return h
