"""Harness pieces that need no server: histogram, workload, comparison, plots."""

import json

import numpy as np
import pytest

from resa.bench.compare import (
    Comparison,
    Row,
    compare_reports,
    parse_csv,
    parse_markdown,
    render_report,
)
from resa.bench.histogram import LatencyHistogram, bucket_width
from resa.bench.load import BenchReport, LoadProfile, Workload, exact_percentile, workload_sequence
from resa.bench.ramp import FailureThresholds, RampResult, ramp_to_failure
from resa.bench.resources import synthetic_cost
from resa.plots import plot_comparison, plot_ga_trace, plot_latency_histogram, plot_ramp
from resa.rng import Stream


def fake_report(mode, mean_s, thr, cpu, mem_mb, errors=0, p95=100.0, p99=200.0, profile=None):
    h = LatencyHistogram()
    h.record_many([mean_s * 1000.0] * 10)
    return BenchReport(
        mode=mode, profile=profile or LoadProfile().to_dict(), duration_s=10.0, completed=int(thr * 10),
        errors=errors, throughput=thr,
        latency={"mean_ms": mean_s * 1000.0, "p50_ms": 50.0, "p95_ms": p95, "p99_ms": p99},
        endpoints={}, statuses={}, histogram=h.to_dict(),
        resources={"mean_cpu_pct": cpu, "mean_mem_bytes": mem_mb * 1e6, "wall_s": 10.0, "cpu_seconds": 5.0},
        cost={"cpu_cost": 0.01, "mem_cost": 0.002, "per_request": 1e-5},
    )


def table1_pair():
    return fake_report("mono", 2.3, 150.0, 65.0, 75.0), fake_report("micro", 1.1, 300.0, 48.0, 60.0)


# ---------------------------------------------------------------- histogram

def test_histogram_percentile_within_a_bucket():
    rng = Stream(3)
    values = [rng.expovariate(40.0) + 0.2 for _ in range(20_000)]
    h = LatencyHistogram()
    h.record_many(values)
    for q in (1, 50, 90, 95, 99, 99.9):
        exact = exact_percentile(values, q)
        assert abs(h.percentile(q) - exact) <= bucket_width(exact)
    assert h.mean == pytest.approx(np.mean(values))
    assert h.percentile(100) == max(values)
    assert min(values) <= h.percentile(0) <= min(values) + bucket_width(min(values))


def test_histogram_merge_and_round_trip():
    a, b = LatencyHistogram(), LatencyHistogram()
    a.record_many([1.0, 2.0, 3.0])
    b.record_many([100.0, 1e7])
    a.merge(b)
    back = LatencyHistogram.from_dict(json.loads(json.dumps(a.to_dict())))
    assert back.n == 5 and back.summary() == a.summary()
    with pytest.raises(ValueError):
        a.record(-1.0)
    assert LatencyHistogram().summary()["p99_ms"] == 0.0


def test_exact_percentile():
    assert exact_percentile([5, 1, 3, 2, 4], 50) == 3
    assert exact_percentile([5, 1, 3, 2, 4], 100) == 5
    assert exact_percentile([], 50) == 0.0


# ---------------------------------------------------------------- workload

def workload():
    trips = [{"origin": "A", "destination": "B", "earliest_departure": 0, "latest_arrival": 9000, "nights": 0}]
    return Workload(["A", "B", "C"], ["t1", "t2"], ["u1", "u2"], trips, 9000)


def test_workload_sequence_is_seed_determined():
    wl, prof = workload(), LoadProfile(seed=4)
    a = [op.to_dict() for op in workload_sequence(wl, prof, 3, 200)]
    assert a == [op.to_dict() for op in workload_sequence(wl, prof, 3, 200)]
    assert a != [op.to_dict() for op in workload_sequence(wl, prof, 4, 200)]
    assert a != [op.to_dict() for op in workload_sequence(wl, LoadProfile(seed=5), 3, 200)]


def test_workload_mix_frequencies():
    ops = workload_sequence(workload(), LoadProfile(), 0, 20_000)
    share = {e: sum(o.endpoint == e for o in ops) / len(ops) for e in ("search", "quote", "booking")}
    assert share["search"] == pytest.approx(0.5, abs=0.015)
    assert share["quote"] == pytest.approx(0.2, abs=0.015)
    assert share["booking"] == pytest.approx(0.1, abs=0.015)
    only = workload_sequence(workload(), LoadProfile(mix={"quote": 100}), 0, 50)
    assert {o.endpoint for o in only} == {"quote"}


def test_profile_validation():
    with pytest.raises(ValueError):
        LoadProfile(concurrency=0)
    with pytest.raises(ValueError):
        LoadProfile(mix={"search": 60})
    with pytest.raises(ValueError):
        LoadProfile(mix={"teleport": 100})
    with pytest.raises(ValueError):
        Workload([], ["t"], ["u"], [], 10)


def test_ramp_stops_at_first_failure():
    # runner stand-in: errors appear from 40 users on
    def runner(base, profile, wl, pids=(), mode=""):
        err = 50 if profile.concurrency >= 40 else 0
        return fake_report(mode, 0.01 * profile.concurrency, 100.0, 10.0, 10.0, errors=err,
                           p95=float(profile.concurrency))

    res = ramp_to_failure("x", 10, 10, 100, LoadProfile(), workload(), pause_s=0, runner=runner)
    assert res.concurrencies() == [10, 20, 30, 40] and res.failure_point == 40
    assert res.p95_increase() == pytest.approx(3.0)
    none = ramp_to_failure("x", 10, 10, 30, LoadProfile(), workload(), pause_s=0, runner=runner)
    assert none.failure_point is None and none.concurrencies() == [10, 20, 30]
    back = RampResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back.failure_point == 40 and back.concurrencies() == res.concurrencies()
    with pytest.raises(ValueError):
        ramp_to_failure("x", 0, 10, 30, LoadProfile(), workload(), runner=runner)


def test_failure_thresholds():
    th = FailureThresholds(max_error_rate=0.01, max_p99_ms=1000.0)
    assert not th.failed(fake_report("m", 0.1, 10, 1, 1))
    assert th.failed(fake_report("m", 0.1, 10, 1, 1, errors=5))
    assert th.failed(fake_report("m", 0.1, 10, 1, 1, p99=1500.0))


def test_synthetic_cost():
    c = synthetic_cost({"cpu_seconds": 3600.0, "gb_seconds": 3600.0}, 1000, cpu_price=0.04, mem_price=0.005)
    assert c["cpu_cost"] == pytest.approx(0.04) and c["mem_cost"] == pytest.approx(0.005)
    assert c["per_request"] == pytest.approx(0.045 / 1000)
    assert synthetic_cost({}, 0)["per_request"] is None


# ---------------------------------------------------------------- comparison

def test_table1_ratios():
    cmp = compare_reports(*table1_pair())
    assert cmp.speedup == pytest.approx(2.0)
    assert cmp.ratio("Average Response Time") == pytest.approx(1.1 / 2.3)
    assert cmp.ratio("CPU Usage") == pytest.approx(48 / 65)
    assert cmp.row("Memory Usage").delta == pytest.approx(-15.0)
    assert not cmp.profile_mismatch and cmp.warnings == []


def test_identical_reports_ratio_one():
    a = fake_report("mono", 0.5, 120.0, 40.0, 30.0)
    cmp = compare_reports(a, a)
    assert all(r.ratio == pytest.approx(1.0) for r in cmp.rows if r.ratio is not None)


def test_table1_render_has_four_rows():
    text = render_report(compare_reports(*table1_pair()).table1(), "csv")
    rows = parse_csv(text)
    assert [r["metric"] for r in rows] == ["Average Response Time (s)", "Throughput (req/s)",
                                          "CPU Usage (%)", "Memory Usage (MB)"]
    assert rows[1]["baseline"] == "150" and rows[1]["optimized"] == "300" and rows[1]["ratio"] == "2"


def test_empty_comparison_renders_header():
    assert render_report(Comparison(), "csv") == "metric,baseline,optimized,ratio\n"
    md = render_report(Comparison(), "markdown")
    assert md.splitlines()[0] == "| metric | baseline | optimized | ratio |" and len(md.splitlines()) == 2


def test_formats_agree():
    cmp = compare_reports(*table1_pair())
    cmp.rows.append(Row("Missing", "", None, 3.0))
    a = parse_csv(render_report(cmp, "csv"))
    b = parse_markdown(render_report(cmp, "markdown"))
    assert a == b
    j = json.loads(render_report(cmp, "json"))
    assert Comparison.from_dict(j).to_dict() == cmp.to_dict()
    with pytest.raises(ValueError, match="unknown format"):
        render_report(cmp, "xml")


def test_profile_mismatch_warns():
    a = fake_report("mono", 1, 1, 1, 1, profile=LoadProfile(concurrency=10).to_dict())
    b = fake_report("micro", 1, 1, 1, 1, profile=LoadProfile(concurrency=20).to_dict())
    cmp = compare_reports(a, b)
    assert cmp.profile_mismatch and "concurrency" in cmp.warnings[0]


# ---------------------------------------------------------------- plots

def test_plots_write_files(tmp_path):
    cmp = compare_reports(*table1_pair())
    ramp = RampResult([(10, table1_pair()[0]), (20, table1_pair()[1])], failure_point=20)
    trace = {"best_fitness": [0.5, 0.7, 0.9], "mean_fitness": [0.3, 0.5, 0.6]}
    outs = [plot_comparison(cmp, tmp_path / "cmp.png", "t"),
            plot_comparison(Comparison(), tmp_path / "empty.png"),
            plot_ramp({"mono": ramp}, tmp_path / "sub" / "ramp.png"),
            plot_ga_trace(trace, tmp_path / "ga.png"),
            plot_latency_histogram(dict(zip(("a", "b"), table1_pair())), tmp_path / "lat.svg")]
    for p in outs:
        assert p.exists() and p.stat().st_size > 500
