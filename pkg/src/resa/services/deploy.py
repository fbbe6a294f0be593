"""Launching a deployment as child processes.

Children come from a ``forkserver`` context that has already imported the
package, so each process starts quickly and shares the interpreter's
read-only pages. Every child binds its port (0 = any), reports it back over
a pipe and then serves until SIGTERM.
"""

from __future__ import annotations

import asyncio
import http.client
import json
import logging
import multiprocessing as mp
import os
import signal
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

from ..forecast import ForecastBundle, load_model, save_model, train_bundle
from ..synthgen import load_scenario
from .config import STATELESS, DeploymentSpec

log = logging.getLogger("resa.deploy")

START_TIMEOUT_S = 60.0
STOP_TIMEOUT_S = 8.0
MODEL_FILE = "model.json"


class DeploymentError(RuntimeError):
    pass


_CTX = None


def _context():
    global _CTX
    if _CTX is None:
        _CTX = mp.get_context("forkserver")
        _CTX.set_forkserver_preload(["resa.services.deploy", "resa.services.server"])
    return _CTX


def _child(role: str, spec_d: dict, scenario_dir: str, model_path: str, extra: dict, port: int, conn) -> None:
    """Entry point of every service process."""
    from .booking import RemoteInventory
    from .config import DeploymentSpec as Spec
    from .handlers import build_state
    from .server import Gateway, ServiceServer, serve

    logging.basicConfig(level=os.environ.get("RESA_LOG", "WARNING").upper(),
                        format=f"%(asctime)s {role} %(levelname)s %(message)s")
    try:
        spec = Spec.from_dict(spec_d)
        cfg = spec.config
        if role == "gateway":
            server = Gateway(extra["upstreams"], cfg.auth_token, cfg.downstream_timeout_ms)
        else:
            scenario = load_scenario(scenario_dir)
            service = role.split("-")[0]
            services = None if role == "mono" else {service}
            models = None
            if services is None or "quote" in services:
                models = load_model(model_path)
            inventory = None
            if "inventory_url" in extra:
                inventory = RemoteInventory(extra["inventory_url"], cfg.downstream_timeout_ms / 1000.0)
            state = build_state(cfg, scenario, models, services, inventory, sharded=spec.sharded)
            if role == "mono":
                server = ServiceServer("mono", state, spec.workers, spec.max_queue, None, check_auth=True)
            else:
                workers = spec.services[service].workers
                server = ServiceServer(role, state, workers, spec.max_queue, services,
                                       blocking=inventory is not None)
    except Exception as exc:  # report startup failure to the parent
        conn.send(("error", f"{type(exc).__name__}: {exc}"))
        conn.close()
        return

    def ready(bound):
        conn.send(("ready", bound, os.getpid()))
        conn.close()

    try:
        asyncio.run(serve(server, spec.host, port, ready))
    except OSError as exc:
        try:
            conn.send(("error", f"bind failed on port {port}: {exc}"))
        except (OSError, BrokenPipeError):
            pass


@dataclass
class Proc:
    role: str
    process: object
    url: str
    pid: int


def _request(url: str, path: str, timeout: float = 2.0, token: str = "") -> tuple[int, bytes]:
    u = urlsplit(url)
    conn = http.client.HTTPConnection(u.hostname, u.port, timeout=timeout)
    try:
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        conn.request("GET", path, headers=headers)
        r = conn.getresponse()
        return r.status, r.read()
    finally:
        conn.close()


def ensure_models(scenario_dir: str | Path, model_path: str | Path | None = None) -> Path:
    """Path to a trained forecast bundle, training one from the scenario when needed."""
    if model_path is not None:
        return Path(model_path)
    p = Path(scenario_dir) / MODEL_FILE
    if p.exists():
        return p
    sc = load_scenario(scenario_dir)
    bundle = train_bundle(sc.observations, sc.demand_log)
    out = Path(tempfile.mkdtemp(prefix="resa-model-")) / MODEL_FILE
    save_model(bundle, out)
    return out


@dataclass
class Deployment:
    """A running monolith or microservice deployment."""

    spec: DeploymentSpec
    scenario_dir: str
    model_path: str | None = None
    procs: list = field(default_factory=list)
    base_url: str = ""

    def _launch(self, role: str, port: int = 0, extra: dict | None = None):
        ctx = _context()
        parent, child = ctx.Pipe(duplex=False)
        p = ctx.Process(target=_child, name=f"resa-{role}", daemon=True,
                        args=(role, self.spec.to_dict(), str(self.scenario_dir), str(self.model_path),
                              extra or {}, port, child))
        p.start()
        child.close()
        return role, p, parent

    def _await(self, pending) -> list[Proc]:
        out = []
        deadline = time.monotonic() + START_TIMEOUT_S
        try:
            for role, p, conn in pending:
                if not conn.poll(max(0.0, deadline - time.monotonic())):
                    raise DeploymentError(f"{role} did not start within {START_TIMEOUT_S:.0f} s")
                try:
                    msg = conn.recv()
                except EOFError:
                    raise DeploymentError(f"{role} exited during startup") from None
                if msg[0] != "ready":
                    raise DeploymentError(f"{role}: {msg[1]}")
                proc = Proc(role, p, f"http://{self.spec.host}:{msg[1]}", msg[2])
                self.procs.append(proc)
                out.append(proc)
        except BaseException:
            # siblings that were launched but never registered would otherwise leak
            known = {id(p.process) for p in self.procs}
            for _, p, _ in pending:
                if id(p) not in known and p.is_alive():
                    p.kill()
                    p.join(1.0)
            raise
        return out

    def start(self) -> "Deployment":
        if not (Path(self.scenario_dir) / "meta.json").exists():
            raise DeploymentError(f"missing scenario bundle at {self.scenario_dir}")
        self.model_path = str(ensure_models(self.scenario_dir, self.model_path))
        try:
            if self.spec.mode == "mono":
                (proc,) = self._await([self._launch("mono", self.spec.port)])
                self.base_url = proc.url
            else:
                self._start_micro()
            self.wait_healthy()
        except BaseException:
            self.stop()
            raise
        return self

    def _start_micro(self) -> None:
        svc = self.spec.services
        first = [self._launch(n, svc[n].port) for n in ("inventory", "profile") if n in svc]
        ready = {p.role: p for p in self._await(first)}
        pending = []
        if "booking" in svc:
            extra = {"inventory_url": ready["inventory"].url} if "inventory" in ready else {}
            pending.append(self._launch("booking", svc["booking"].port, extra))
        for name in STATELESS:
            if name not in svc:
                continue
            for r in range(svc[name].replicas):
                port = svc[name].port + r if svc[name].port else 0
                pending.append(self._launch(f"{name}-{r}", port))
        for p in self._await(pending):
            ready[p.role] = p
        upstreams: dict[str, list] = {}
        for role, p in ready.items():
            upstreams.setdefault(role.split("-")[0], []).append((role, p.url))
        for v in upstreams.values():
            v.sort()
        (gw,) = self._await([self._launch("gateway", self.spec.port, {"upstreams": upstreams})])
        self.base_url = gw.url

    def wait_healthy(self, timeout: float = 10.0) -> None:
        deadline = time.monotonic() + timeout
        while True:
            bad = [r for r, s in self.health().items() if s != 200]
            if not bad:
                return
            if time.monotonic() > deadline:
                raise DeploymentError(f"unhealthy after start: {', '.join(bad)}")
            time.sleep(0.05)

    def health(self) -> dict:
        out = {}
        for p in self.procs:
            try:
                out[p.role] = _request(p.url, "/health")[0]
            except OSError:
                out[p.role] = 0
        return out

    def metrics(self) -> dict:
        out = {}
        for p in self.procs:
            try:
                status, body = _request(p.url, "/metrics", token=self.spec.config.auth_token)
                out[p.role] = json.loads(body) if status == 200 else {"status": status}
            except OSError:
                out[p.role] = {"status": 0}
        return out

    def pids(self) -> dict:
        return {p.role: p.pid for p in self.procs}

    def urls(self) -> dict:
        return {p.role: p.url for p in self.procs}

    def kill(self, role: str) -> None:
        """Stop one process abruptly (used to exercise gateway failure handling)."""
        for p in self.procs:
            if p.role == role:
                p.process.kill()
                p.process.join(STOP_TIMEOUT_S)

    def stop(self) -> None:
        # gateway first so no new work reaches the services
        for p in reversed(self.procs):
            if p.process.is_alive():
                os.kill(p.pid, signal.SIGTERM)
        deadline = time.monotonic() + STOP_TIMEOUT_S
        for p in self.procs:
            p.process.join(max(0.0, deadline - time.monotonic()))
            if p.process.is_alive():
                log.warning("%s did not drain in time; killing", p.role)
                p.process.kill()
                p.process.join(1.0)
        self.procs.clear()

    def __enter__(self) -> "Deployment":
        return self.start() if not self.procs else self

    def __exit__(self, *exc) -> None:
        self.stop()


def run_deployment(spec: DeploymentSpec, scenario_dir: str | Path, model_path=None) -> Deployment:
    """Start ``spec`` against a scenario bundle and return the running handle."""
    return Deployment(spec, str(scenario_dir), None if model_path is None else str(model_path)).start()
