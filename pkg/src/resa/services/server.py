"""HTTP runtime for every process role: monolith, single service, or gateway.

Each process serves one catch-all aiohttp route and routes with the shared
table in :mod:`.handlers`, so error bodies look the same in both modes.

A process has ``workers`` request slots. A request holds its slot for the
handler's compute and for the endpoint's synthetic service time, so at most
``workers`` requests are in service at once and the rest wait. Requests
beyond ``workers + max_queue`` in flight are shed with 503. Handlers that
block on other services run on a thread pool of the same size instead of
the event loop thread.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
import os
import signal
import time
import uuid
from concurrent.futures import ThreadPoolExecutor

import aiohttp
from aiohttp import web

from ..bench.histogram import LatencyHistogram
from .handlers import PREFIXES, Request, State, busy_work, dispatch, encode, error_body

log = logging.getLogger("resa.server")

JSON = "application/json"
SHUTDOWN_S = 5.0


def _json_response(status: int, body, headers=None) -> web.Response:
    return web.Response(status=status, body=encode(body), content_type=JSON, headers=headers)


def authorized(headers, token: str) -> bool:
    if not token:
        return True
    return headers.get("Authorization", "") == f"Bearer {token}"


class Metrics:
    """Counters and a latency histogram; touched only from the event loop thread."""

    def __init__(self, name: str):
        self.name = name
        self.started = time.time()
        self.requests: dict[str, int] = {}
        self.statuses: dict[str, int] = {}
        self.shed = 0
        self.latency = LatencyHistogram()

    def observe(self, endpoint: str, status: int, ms: float) -> None:
        self.requests[endpoint] = self.requests.get(endpoint, 0) + 1
        key = str(status)
        self.statuses[key] = self.statuses.get(key, 0) + 1
        self.latency.record(ms)

    def to_dict(self, extra=None) -> dict:
        d = {
            "process": self.name,
            "pid": os.getpid(),
            "uptime_s": time.time() - self.started,
            "requests": dict(sorted(self.requests.items())),
            "statuses": dict(sorted(self.statuses.items())),
            "shed": self.shed,
            "latency": self.latency.summary(),
            "histogram": self.latency.to_dict(),
        }
        if extra:
            d.update(extra)
        return d


class ServiceServer:
    """Monolith (``services=None``) or one microservice (``services={name}``)."""

    def __init__(self, name: str, state: State, workers: int, max_queue: int, services=None,
                 check_auth: bool = False, blocking: bool = False):
        self.name = name
        self.state = state
        self.services = services
        self.workers = workers
        self.limit = workers + max_queue
        self.check_auth = check_auth
        self.pool = ThreadPoolExecutor(workers, thread_name_prefix=name) if blocking else None
        self.slots: asyncio.Semaphore | None = None
        self.in_flight = 0
        self.metrics = Metrics(name)

    async def _run(self, req: Request):
        if self.pool is not None:
            loop = asyncio.get_running_loop()
            status, payload, route = await loop.run_in_executor(self.pool, dispatch, self.state, req,
                                                                self.services)
        else:
            status, payload, route = dispatch(self.state, req, self.services)
        if route is not None and route.work and status < 400:
            work = self.state.config.work
            units = work.cpu_units.get(route.work, 0)
            if units:
                busy_work(units)
            delay = work.delay_ms.get(route.work, 0.0)
            if delay:
                await asyncio.sleep(delay / 1000.0)
        return status, payload, route.endpoint if route is not None else "unmatched"

    def _extra_metrics(self) -> dict:
        d = {"in_flight": self.in_flight, "workers": self.workers}
        if self.state.bookings is not None:
            d["events"] = self.state.bookings.bus.stats()
            d["notifications"] = dict(self.state.notifications)
        return d

    async def handle(self, request: web.Request) -> web.StreamResponse:
        t0 = time.perf_counter()
        rid = request.headers.get("X-Request-Id") or uuid.uuid4().hex
        headers = {"X-Request-Id": rid, "X-Served-By": self.name}
        path = request.path
        if path == "/health":
            return _json_response(200, {"status": "ok"}, headers)
        if self.check_auth and not authorized(request.headers, self.state.config.auth_token):
            return _json_response(401, error_body("unauthorized"), headers)
        if path == "/metrics":
            return _json_response(200, self.metrics.to_dict(self._extra_metrics()), headers)
        if self.in_flight >= self.limit:
            self.metrics.shed += 1
            self.metrics.observe("shed", 503, (time.perf_counter() - t0) * 1000.0)
            return _json_response(503, error_body("overloaded"), headers)
        self.in_flight += 1
        try:
            body = await request.read()
            req = Request(request.method, path, dict(request.query), body, dict(request.headers))
            if self.slots is None:
                self.slots = asyncio.Semaphore(self.workers)
            try:
                async with self.slots:
                    status, payload, endpoint = await self._run(req)
            except Exception:  # handler bug: report, keep serving
                log.exception("unhandled error on %s %s", request.method, path)
                status, payload, endpoint = 500, error_body("internal error"), "error"
        finally:
            self.in_flight -= 1
        self.metrics.observe(endpoint, status, (time.perf_counter() - t0) * 1000.0)
        return _json_response(status, payload, headers)

    def app(self) -> web.Application:
        app = web.Application(client_max_size=8 * 1024 * 1024)
        app.router.add_route("*", "/{tail:.*}", self.handle)
        return app

    async def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown(wait=True)


class Gateway:
    """Path-prefix router with round-robin over replicas of each service."""

    FORWARD = ("Content-Type", "X-Force-Decline")

    def __init__(self, upstreams: dict, token: str, timeout_ms: int):
        # upstreams: service -> list of (replica name, base url)
        self.upstreams = {k: list(v) for k, v in upstreams.items()}
        self._rr = {k: itertools.cycle(range(len(v))) for k, v in self.upstreams.items()}
        self.token = token
        self.timeout = aiohttp.ClientTimeout(total=timeout_ms / 1000.0)
        self.session: aiohttp.ClientSession | None = None
        self.metrics = Metrics("gateway")

    def pick(self, service: str) -> tuple[str, str]:
        reps = self.upstreams[service]
        return reps[next(self._rr[service])]

    async def handle(self, request: web.Request) -> web.StreamResponse:
        t0 = time.perf_counter()
        rid = request.headers.get("X-Request-Id") or uuid.uuid4().hex
        path = request.path
        if path == "/health":
            return _json_response(200, {"status": "ok"}, {"X-Request-Id": rid, "X-Served-By": "gateway"})
        if not authorized(request.headers, self.token):
            return _json_response(401, error_body("unauthorized"), {"X-Request-Id": rid})
        if path == "/metrics":
            return _json_response(200, self.metrics.to_dict({"upstreams": self.upstreams}), {"X-Request-Id": rid})
        service = PREFIXES.get(path.strip("/").split("/", 1)[0])
        if service is None or service not in self.upstreams:
            self.metrics.observe("unknown", 404, (time.perf_counter() - t0) * 1000.0)
            return _json_response(404, error_body("not found"), {"X-Request-Id": rid})
        name, base = self.pick(service)
        headers = {k: request.headers[k] for k in self.FORWARD if k in request.headers}
        headers["X-Request-Id"] = rid
        body = await request.read()
        url = base + request.rel_url.path_qs
        try:
            async with self.session.request(request.method, url, data=body or None, headers=headers) as resp:
                payload = await resp.read()
                status = resp.status
                ctype = resp.headers.get("Content-Type", JSON)
        except asyncio.TimeoutError:
            status, payload, ctype = 504, encode(error_body(f"upstream {service} timed out")), JSON
        except aiohttp.ClientError:
            status, payload, ctype = 502, encode(error_body(f"upstream {service} unavailable")), JSON
        self.metrics.observe(service, status, (time.perf_counter() - t0) * 1000.0)
        out = web.Response(status=status, body=payload, headers={"X-Request-Id": rid, "X-Served-By": name})
        out.headers["Content-Type"] = ctype
        return out

    def app(self) -> web.Application:
        app = web.Application(client_max_size=8 * 1024 * 1024)
        app.router.add_route("*", "/{tail:.*}", self.handle)

        async def on_start(_):
            self.session = aiohttp.ClientSession(
                connector=aiohttp.TCPConnector(limit=0, force_close=False),
                cookie_jar=aiohttp.DummyCookieJar(), auto_decompress=False, timeout=self.timeout,
                skip_auto_headers=("User-Agent", "Accept-Encoding"))

        async def on_stop(_):
            if self.session is not None:
                await self.session.close()

        app.on_startup.append(on_start)
        app.on_cleanup.append(on_stop)
        return app

    async def close(self) -> None:
        pass


async def serve(server, host: str, port: int, ready=None, stop: asyncio.Event | None = None) -> None:
    """Bind, report the bound port through ``ready(port)``, run until ``stop`` is set."""
    stop = stop or asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGTERM, signal.SIGINT):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass
    runner = web.AppRunner(server.app(), access_log=None, shutdown_timeout=SHUTDOWN_S)
    await runner.setup()
    site = web.TCPSite(runner, host, port, backlog=4096, reuse_address=True)
    await site.start()
    bound = runner.addresses[0][1]
    if ready is not None:
        ready(bound)
    await stop.wait()
    # stop accepting, then give in-flight requests until the deadline
    await runner.cleanup()
    await server.close()
