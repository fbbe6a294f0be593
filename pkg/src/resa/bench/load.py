"""Closed-loop HTTP load generation.

Each virtual user owns a PRNG stream keyed by ``(seed, user index)`` and
loops: draw an operation from the mix, issue it, wait for the response,
think. The sequence of operations per user depends only on the seed and the
workload, never on timing. A "booking" operation is the three-call saga
(create, pay, confirm) measured as one logical request.

A request counts as an error when the server answers 5xx or the transport
fails or times out; 4xx answers are business outcomes and count as completed.
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import aiohttp

from ..model import MINUTES_PER_DAY, TripRequest
from ..optimizer import InfeasibleRequest, build_slot_candidates
from ..rng import Stream
from .histogram import LatencyHistogram
from .resources import ResourceSampler, synthetic_cost

ENDPOINTS = ("search", "quote", "recommend", "optimize", "booking")
DEFAULT_MIX = {"search": 50, "quote": 20, "recommend": 15, "optimize": 5, "booking": 10}


class LoadError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadProfile:
    concurrency: int = 200
    duration_s: float = 10.0
    warmup_s: float = 2.0
    mix: Mapping = field(default_factory=lambda: dict(DEFAULT_MIX))
    think_time_ms: float = 0.0
    think_dist: str = "fixed"          # fixed | exponential
    ramp_up_s: float = 0.0             # user start times spread evenly over this span
    timeout_s: float = 30.0
    seed: int = 0
    token: str = "resa-dev-token"

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if any(k not in ENDPOINTS for k in self.mix):
            raise ValueError(f"unknown endpoint in mix: {sorted(set(self.mix) - set(ENDPOINTS))}")
        if abs(sum(self.mix.values()) - 100) > 1e-9:
            raise ValueError("mix weights must sum to 100")
        if self.think_dist not in ("fixed", "exponential"):
            raise ValueError("think_dist must be fixed or exponential")
        if self.duration_s < 0 or self.warmup_s < 0:
            raise ValueError("durations must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mix"] = dict(self.mix)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "LoadProfile":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def load(cls, path) -> "LoadProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def shape(self) -> dict:
        """The parts that must match for two reports to be comparable."""
        return {"concurrency": self.concurrency, "mix": dict(sorted(self.mix.items())),
                "think_time_ms": self.think_time_ms, "think_dist": self.think_dist,
                "duration_s": self.duration_s}


@dataclass(frozen=True)
class Op:
    endpoint: str
    method: str
    path: str
    body: dict | None = None

    def to_dict(self) -> dict:
        return {"endpoint": self.endpoint, "method": self.method, "path": self.path, "body": self.body}


class Workload:
    """Request templates drawn from a scenario (cities, options, users, feasible trips)."""

    def __init__(self, cities: Sequence[str], transport_ids: Sequence[str], user_ids: Sequence[str],
                 trips: Sequence[dict], horizon_min: int):
        if not cities or not transport_ids or not user_ids:
            raise ValueError("workload needs cities, transport options and users")
        self.cities = list(cities)
        self.transport_ids = list(transport_ids)
        self.user_ids = list(user_ids)
        self.trips = list(trips)
        self.horizon = horizon_min

    @classmethod
    def from_scenario(cls, scenario, max_trips: int = 32) -> "Workload":
        cat = scenario.catalog
        cities = sorted(cat.cities)
        horizon = scenario.params.horizon_days * MINUTES_PER_DAY
        trips = []
        for a in cities:
            for b in cities:
                if a == b or len(trips) >= max_trips:
                    continue
                for nights in (0, 1):
                    req = TripRequest(a, b, 0, horizon, nights=nights)
                    try:
                        build_slot_candidates(cat, req)
                    except InfeasibleRequest:
                        continue
                    trips.append(req.to_dict())
        transport = sorted(o.id for o in cat.options if o.kind.is_transport)
        return cls(cities, transport, sorted(u.user_id for u in scenario.users), trips, horizon)

    def draw(self, endpoint: str, rng: Stream, user: int, i: int, seed: int) -> Op:
        if endpoint == "search":
            a, b = rng.choice(self.cities), rng.choice(self.cities)
            if a == b:
                return Op("search", "GET", f"/search?dest={b}")
            lo = rng.randint(self.horizon // 2)
            return Op("search", "GET", f"/search?origin={a}&dest={b}&from={lo}&to={lo + self.horizon // 2}")
        if endpoint == "quote":
            return Op("quote", "POST", "/quote",
                      {"option_id": rng.choice(self.transport_ids), "date": 1 + rng.randint(365)})
        if endpoint == "recommend":
            return Op("recommend", "POST", "/recommend", {"user_id": rng.choice(self.user_ids), "n": 5})
        if endpoint == "optimize":
            if not self.trips:
                raise LoadError("workload has no feasible trip requests")
            return Op("optimize", "POST", "/optimize",
                      {"trip_request": rng.choice(self.trips), "seed": rng.randint(2 ** 31)})
        if endpoint == "booking":
            return Op("booking", "POST", "/bookings", {
                "user_id": rng.choice(self.user_ids),
                "itinerary": {"slots": [rng.choice(self.transport_ids)], "nights": 0},
                "idempotency_key": f"s{seed}-u{user}-{i}",
            })
        raise ValueError(f"unknown endpoint {endpoint}")


def _cumulative(mix: Mapping) -> tuple[list, list]:
    names = [e for e in ENDPOINTS if mix.get(e, 0) > 0]
    acc, out = 0.0, []
    for e in names:
        acc += mix[e]
        out.append(acc)
    return names, out


def user_stream(seed: int, user: int) -> Stream:
    return Stream(seed, 21, user)


def next_op(workload: Workload, profile: LoadProfile, rng: Stream, user: int, i: int) -> Op:
    names, cum = _cumulative(profile.mix)
    x = rng.random() * cum[-1]
    k = next(j for j, c in enumerate(cum) if x < c)
    return workload.draw(names[k], rng, user, i, profile.seed)


def workload_sequence(workload: Workload, profile: LoadProfile, user: int, n: int) -> list[Op]:
    """The first ``n`` operations virtual user ``user`` issues."""
    rng = user_stream(profile.seed, user)
    return [next_op(workload, profile, rng, user, i) for i in range(n)]


# ---------------------------------------------------------------- report

@dataclass
class BenchReport:
    mode: str
    profile: dict
    duration_s: float
    completed: int
    errors: int
    throughput: float
    latency: dict
    endpoints: dict
    statuses: dict
    histogram: dict
    resources: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    issued: int = 0
    target: str = ""
    started_at: float = 0.0

    @property
    def error_rate(self) -> float:
        total = self.completed + self.errors
        return self.errors / total if total else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error_rate"] = self.error_rate
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "BenchReport":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "BenchReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Tally:
    def __init__(self):
        self.hist = LatencyHistogram()
        self.ok = 0
        self.err = 0

    def summary(self) -> dict:
        s = self.hist.summary()
        return {"completed": self.ok, "errors": self.err, "mean_ms": s["mean_ms"], "p50_ms": s["p50_ms"],
                "p95_ms": s["p95_ms"], "p99_ms": s["p99_ms"]}


# ---------------------------------------------------------------- runner

async def _send(session, base: str, method: str, path: str, body, headers, timeout) -> tuple[int, bytes]:
    data = None if body is None else json.dumps(body, separators=(",", ":"))
    async with session.request(method, base + path, data=data, headers=headers, timeout=timeout) as r:
        return r.status, await r.read()


async def execute(session, base: str, op: Op, headers, timeout) -> tuple[int, bytes]:
    """Issue one logical operation; bookings chain create, pay and confirm."""
    status, payload = await _send(session, base, op.method, op.path, op.body, headers, timeout)
    if op.endpoint != "booking" or status not in (200, 201):
        return status, payload
    bid = json.loads(payload)["booking_id"]
    for step in ("pay", "confirm"):
        status, payload = await _send(session, base, "POST", f"/bookings/{bid}/{step}", None, headers, timeout)
        if status >= 300:
            break
    return status, payload


async def _check_target(session, base: str) -> None:
    try:
        async with session.get(base + "/health", timeout=aiohttp.ClientTimeout(total=5)) as r:
            if r.status != 200:
                raise LoadError(f"target unhealthy: /health returned {r.status}")
    except (aiohttp.ClientError, asyncio.TimeoutError) as exc:
        raise LoadError(f"target unreachable: {base} ({exc})") from None


async def run_load_async(base: str, profile: LoadProfile, workload: Workload, pids=(), mode: str = "",
                         cpu_price: float | None = None, mem_price: float | None = None,
                         sample_interval: float = 1.0) -> BenchReport:
    if profile.duration_s <= 0:
        raise LoadError("empty measurement window")
    base = base.rstrip("/")
    headers = {"Content-Type": "application/json"}
    if profile.token:
        headers["Authorization"] = f"Bearer {profile.token}"
    timeout = aiohttp.ClientTimeout(total=profile.timeout_s)
    connector = aiohttp.TCPConnector(limit=0, force_close=False)
    tallies = {e: _Tally() for e in ENDPOINTS}
    statuses: dict[str, int] = {}
    issued = 0
    async with aiohttp.ClientSession(connector=connector) as session:
        await _check_target(session, base)
        loop = asyncio.get_running_loop()
        t_start = loop.time()
        t_measure = t_start + profile.warmup_s
        t_end = t_measure + profile.duration_s

        async def user(u: int):
            nonlocal issued
            rng = user_stream(profile.seed, u)
            think = Stream(profile.seed, 22, u)
            if profile.ramp_up_s > 0:
                await asyncio.sleep(profile.ramp_up_s * u / profile.concurrency)
            i = 0
            while loop.time() < t_end:
                op = next_op(workload, profile, rng, u, i)
                i += 1
                issued += 1
                t0 = loop.time()
                try:
                    status, _ = await execute(session, base, op, headers, timeout)
                except (aiohttp.ClientError, asyncio.TimeoutError, OSError, ValueError, KeyError):
                    status = 0
                t1 = loop.time()
                if t_measure <= t1 <= t_end:
                    tally = tallies[op.endpoint]
                    if status == 0 or status >= 500:
                        tally.err += 1
                    else:
                        tally.ok += 1
                        tally.hist.record((t1 - t0) * 1000.0)
                    key = str(status)
                    statuses[key] = statuses.get(key, 0) + 1
                if profile.think_time_ms > 0:
                    w = profile.think_time_ms
                    if profile.think_dist == "exponential":
                        w = think.expovariate(w)
                    await asyncio.sleep(w / 1000.0)

        sampler = ResourceSampler(pids, sample_interval) if pids else None
        tasks = [asyncio.create_task(user(u)) for u in range(profile.concurrency)]
        try:
            await asyncio.sleep(max(0.0, t_measure - loop.time()))
            if sampler:
                sampler.start()
            await asyncio.sleep(max(0.0, t_end - loop.time()))
            if sampler:
                sampler.stop()
        finally:
            for t in tasks:
                t.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)

    hist = LatencyHistogram()
    for t in tallies.values():
        hist.merge(t.hist)
    completed = sum(t.ok for t in tallies.values())
    errors = sum(t.err for t in tallies.values())
    resources = sampler.series() if sampler else {}
    cost = synthetic_cost(resources, completed, cpu_price, mem_price) if sampler else {}
    return BenchReport(
        mode=mode, profile=profile.to_dict(), duration_s=profile.duration_s, completed=completed,
        errors=errors, throughput=completed / profile.duration_s, latency=hist.summary(),
        endpoints={e: t.summary() for e, t in tallies.items() if t.ok or t.err},
        statuses=dict(sorted(statuses.items())), histogram=hist.to_dict(), resources=resources,
        cost=cost, issued=issued, target=base, started_at=time.time(),
    )


def run_load(base: str, profile: LoadProfile, workload: Workload, pids=(), mode: str = "", **kw) -> BenchReport:
    """Blocking wrapper around :func:`run_load_async`."""
    return asyncio.run(run_load_async(base, profile, workload, pids, mode, **kw))


def exact_percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile of raw samples (reference for the histogram)."""
    xs = sorted(values)
    if not xs:
        return 0.0
    rank = max(1, math.ceil(q / 100.0 * len(xs)))
    return xs[rank - 1]
