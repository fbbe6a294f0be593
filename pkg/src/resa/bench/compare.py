"""Side-by-side comparison of two bench reports and its rendering.

Every ratio is ``optimized / baseline`` on the raw report fields and every
delta is ``optimized - baseline``; nothing is normalised. A throughput ratio
above 1 is a speedup, a latency ratio below 1 is an improvement.

CSV/markdown columns: ``metric, baseline, optimized, ratio``. The JSON form
carries the same rows plus ``unit`` and ``delta`` and the comparison header
(modes, profile-mismatch flag, warnings).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

from .load import BenchReport, LoadProfile

COLUMNS = ("metric", "baseline", "optimized", "ratio")
FORMATS = ("csv", "json", "markdown")

# the four rows laid out like the classic "traditional vs optimized" table
TABLE1 = ("Average Response Time", "Throughput", "CPU Usage", "Memory Usage")


@dataclass
class Row:
    metric: str
    unit: str
    baseline: float | None
    optimized: float | None

    @property
    def ratio(self) -> float | None:
        if self.baseline is None or self.optimized is None or self.baseline == 0:
            return None
        return self.optimized / self.baseline

    @property
    def delta(self) -> float | None:
        if self.baseline is None or self.optimized is None:
            return None
        return self.optimized - self.baseline

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        d["delta"] = self.delta
        return d


@dataclass
class Comparison:
    rows: list = field(default_factory=list)
    baseline_mode: str = ""
    optimized_mode: str = ""
    profile_mismatch: bool = False
    warnings: list = field(default_factory=list)

    def row(self, metric: str) -> Row:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    def ratio(self, metric: str) -> float | None:
        return self.row(metric).ratio

    @property
    def speedup(self) -> float | None:
        return self.ratio("Throughput")

    def table1(self) -> "Comparison":
        """Only the four headline rows."""
        rows = [r for r in self.rows if r.metric in TABLE1]
        return Comparison(rows, self.baseline_mode, self.optimized_mode, self.profile_mismatch,
                          list(self.warnings))

    def to_dict(self) -> dict:
        return {
            "baseline_mode": self.baseline_mode,
            "optimized_mode": self.optimized_mode,
            "profile_mismatch": self.profile_mismatch,
            "warnings": list(self.warnings),
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d) -> "Comparison":
        rows = [Row(r["metric"], r.get("unit", ""), r["baseline"], r["optimized"]) for r in d.get("rows", [])]
        return cls(rows, d.get("baseline_mode", ""), d.get("optimized_mode", ""),
                   bool(d.get("profile_mismatch", False)), list(d.get("warnings", [])))


def _res(report: BenchReport, key: str, scale: float = 1.0) -> float | None:
    v = report.resources.get(key) if report.resources else None
    return None if v is None else v * scale


def _per_hour(report: BenchReport, key: str) -> float | None:
    wall = report.resources.get("wall_s") if report.resources else None
    cost = report.cost.get(key) if report.cost else None
    if not wall or cost is None:
        return None
    return cost / wall * 3600.0


def report_rows(r: BenchReport) -> list[tuple[str, str, float | None]]:
    lat = r.latency
    return [
        ("Average Response Time", "s", lat["mean_ms"] / 1000.0),
        ("Throughput", "req/s", r.throughput),
        ("CPU Usage", "%", _res(r, "mean_cpu_pct")),
        ("Memory Usage", "MB", _res(r, "mean_mem_bytes", 1e-6)),
        ("p50 Latency", "ms", lat["p50_ms"]),
        ("p95 Latency", "ms", lat["p95_ms"]),
        ("p99 Latency", "ms", lat["p99_ms"]),
        ("Error Rate", "fraction", r.error_rate),
        ("Completed Requests", "count", float(r.completed)),
        ("CPU Seconds", "s", _res(r, "cpu_seconds")),
        ("CPU Cost (per hour)", "synthetic $/h", _per_hour(r, "cpu_cost")),
        ("Memory Cost (per hour)", "synthetic $/h", _per_hour(r, "mem_cost")),
        ("Cost per Request", "synthetic $", r.cost.get("per_request") if r.cost else None),
    ]


def compare_reports(a: BenchReport, b: BenchReport) -> Comparison:
    """``a`` is the baseline, ``b`` the optimized deployment."""
    rows = [Row(m, u, va, vb) for (m, u, va), (_, _, vb) in zip(report_rows(a), report_rows(b))]
    warnings = []
    shape_a = LoadProfile.from_dict(a.profile).shape() if a.profile else {}
    shape_b = LoadProfile.from_dict(b.profile).shape() if b.profile else {}
    mismatch = shape_a != shape_b
    if mismatch:
        keys = sorted(k for k in set(shape_a) | set(shape_b) if shape_a.get(k) != shape_b.get(k))
        warnings.append(f"profiles differ in: {', '.join(keys)}")
    if (a.resources or {}).get("truncated") or (b.resources or {}).get("truncated"):
        warnings.append("resource series truncated (a process exited mid-run)")
    return Comparison(rows, a.mode, b.mode, mismatch, warnings)


# ---------------------------------------------------------------- rendering

def fmt(v) -> str:
    """Shared number formatting so every format shows identical values."""
    if v is None:
        return ""
    return format(float(v), ".6g")


def _cells(row: Row) -> list[str]:
    name = f"{row.metric} ({row.unit})" if row.unit else row.metric
    return [name, fmt(row.baseline), fmt(row.optimized), fmt(row.ratio)]


def render_report(comparison: Comparison, format: str = "csv") -> str:
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {', '.join(FORMATS)}")
    if format == "json":
        return json.dumps(comparison.to_dict(), indent=1, sort_keys=True) + "\n"
    rows = [_cells(r) for r in comparison.rows]
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
    lines += ["| " + " | ".join(c or "-" for c in cells) + " |" for cells in rows]
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def parse_markdown(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.startswith("|")]
    head = [c.strip() for c in lines[0].strip("|").split("|")]
    out = []
    for ln in lines[2:]:
        cells = [c.strip() for c in ln.strip("|").split("|")]
        out.append({h: ("" if c == "-" else c) for h, c in zip(head, cells)})
    return out
