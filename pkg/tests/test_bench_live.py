"""The load generator checked against servers whose behaviour is known."""

import socket

import pytest

from resa.bench.load import LoadError, LoadProfile, Workload, run_load
from resa.bench.ramp import ramp_to_failure
from resa.bench.resources import sample_resources
from resa.bench.stubs import start_stub
from resa.services.config import DeploymentSpec
from resa.services.deploy import run_deployment
from resa.synthgen import load_scenario

pytestmark = pytest.mark.slow

WL = Workload(["A", "B"], ["t1"], ["u1"], [], 1000)
SEARCH = {"search": 100}


def test_fixed_stub_single_user():
    with start_stub("fixed", latency_ms=10) as s:
        r = run_load(s.url, LoadProfile(concurrency=1, duration_s=3, warmup_s=0.5, mix=SEARCH), WL)
    # one closed-loop user against a 10 ms server: ~100 req/s
    assert 80 <= r.throughput <= 120
    assert r.errors == 0 and r.latency["p50_ms"] >= 10.0
    assert sum(e["completed"] for e in r.endpoints.values()) == r.completed
    assert sum(r.statuses.values()) == r.completed + r.errors


def test_endpoint_counts_sum_to_total():
    wl = Workload(["A", "B"], ["t1"], ["u1"],
                  [{"origin": "A", "destination": "B", "earliest_departure": 0, "latest_arrival": 9000}], 1000)
    with start_stub("fixed", latency_ms=2) as s:
        r = run_load(s.url, LoadProfile(concurrency=8, duration_s=1.5, warmup_s=0.3), wl)
    assert len(r.endpoints) >= 4
    assert sum(e["completed"] for e in r.endpoints.values()) == r.completed
    assert sum(e["errors"] for e in r.endpoints.values()) == r.errors


def test_empty_window_and_unreachable():
    with pytest.raises(LoadError, match="empty measurement window"):
        run_load("http://127.0.0.1:1", LoadProfile(duration_s=0), WL)
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    with pytest.raises(LoadError, match="unreachable"):
        run_load(f"http://127.0.0.1:{port}", LoadProfile(duration_s=1), WL)


def test_cliff_stub_failure_point():
    # 200 ms service, hard limit 120 in flight: failures start once users exceed 120
    with start_stub("cliff", latency_ms=200, capacity=120) as s:
        res = ramp_to_failure(s.url, 50, 50, 300, LoadProfile(duration_s=2, warmup_s=0.5, mix=SEARCH), WL,
                              pause_s=0.2)
    assert res.failure_point is not None and abs(res.failure_point - 120) <= 50
    cs = res.concurrencies()
    assert cs == sorted(cs) and cs[-1] == res.failure_point
    assert all(r.error_rate == 0 for c, r in res.steps[:-1])


def test_resource_sampler_idle_and_busy():
    with start_stub("fixed") as idle:
        quiet = sample_resources([idle.pid], 0.25, 1.5)
    assert quiet["mean_cpu_pct"] < 5.0 and quiet["mean_mem_bytes"] > 1e6
    with start_stub("busy") as busy:
        hot = sample_resources([busy.pid], 0.25, 1.5)
    assert 80.0 <= hot["mean_cpu_pct"] <= 105.0
    assert len(hot["samples"]) >= 5 and not hot["truncated"]


def test_generator_outpaces_the_system(tiny_dir):
    """The client must not be the bottleneck: a null server absorbs far more than the deployment."""
    prof = LoadProfile(concurrency=200, duration_s=3, warmup_s=1, mix=SEARCH)
    with start_stub("null") as s:
        ceiling = run_load(s.url, prof, WL).throughput
    wl = Workload.from_scenario(load_scenario(tiny_dir))
    with run_deployment(DeploymentSpec.monolith(), tiny_dir) as dep:
        real = run_load(dep.base_url, prof, wl).throughput
    assert ceiling >= 10 * real
