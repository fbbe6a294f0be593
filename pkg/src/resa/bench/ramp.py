"""Ramp-to-failure: repeated closed-loop runs at increasing concurrency."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .load import BenchReport, LoadProfile, Workload, run_load

log = logging.getLogger("resa.ramp")


@dataclass(frozen=True)
class FailureThresholds:
    max_error_rate: float = 0.01
    max_p99_ms: float = 5000.0

    def failed(self, report: BenchReport) -> bool:
        return report.error_rate > self.max_error_rate or report.latency["p99_ms"] > self.max_p99_ms


@dataclass
class RampResult:
    steps: list = field(default_factory=list)          # [(concurrency, BenchReport)]
    failure_point: int | None = None
    thresholds: FailureThresholds = field(default_factory=FailureThresholds)
    max_concurrency: int = 0

    def concurrencies(self) -> list[int]:
        return [c for c, _ in self.steps]

    def report_at(self, concurrency: int) -> BenchReport:
        for c, r in self.steps:
            if c == concurrency:
                return r
        raise KeyError(concurrency)

    def p95_increase(self) -> float:
        """Relative p95 growth from the first step to the failure point (last step if none)."""
        if not self.steps:
            return 0.0
        first = self.steps[0][1].latency["p95_ms"]
        end = self.failure_point if self.failure_point is not None else self.steps[-1][0]
        last = self.report_at(end).latency["p95_ms"]
        return (last - first) / first if first > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "failure_point": self.failure_point,
            "max_concurrency": self.max_concurrency,
            "thresholds": {"max_error_rate": self.thresholds.max_error_rate,
                           "max_p99_ms": self.thresholds.max_p99_ms},
            "p95_increase": self.p95_increase(),
            "steps": [{"concurrency": c, "report": r.to_dict()} for c, r in self.steps],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RampResult":
        th = FailureThresholds(**d.get("thresholds", {}))
        steps = [(s["concurrency"], BenchReport.from_dict(s["report"])) for s in d["steps"]]
        return cls(steps, d.get("failure_point"), th, d.get("max_concurrency", 0))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))


def ramp_to_failure(base: str, start: int, step: int, max_concurrency: int, profile: LoadProfile,
                    workload: Workload, pids=(), mode: str = "",
                    thresholds: FailureThresholds | None = None, pause_s: float = 1.0,
                    runner=run_load) -> RampResult:
    """Run ``profile`` at start, start+step, ... up to ``max_concurrency``; stop at the first failure."""
    if start < 1 or step < 1 or max_concurrency < start:
        raise ValueError("need 1 <= start <= max and step >= 1")
    thresholds = thresholds or FailureThresholds()
    result = RampResult(thresholds=thresholds, max_concurrency=max_concurrency)
    for c in range(start, max_concurrency + 1, step):
        report = runner(base, replace(profile, concurrency=c), workload, pids=pids, mode=mode)
        result.steps.append((c, report))
        log.info("ramp %s c=%d thr=%.1f p95=%.1fms p99=%.1fms err=%.4f", mode, c, report.throughput,
                 report.latency["p95_ms"], report.latency["p99_ms"], report.error_rate)
        if thresholds.failed(report):
            result.failure_point = c
            break
        if pause_s > 0:
            time.sleep(pause_s)
    return result
