"""Deployment and service configuration.

Both deployment modes read the same :class:`ServiceConfig`; they differ only
in :class:`DeploymentSpec` topology (process count, replica count, pools and
lock granularity).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from ..optimizer import GaConfig

STATELESS = ("search", "quote", "recommend", "optimize")
STATEFUL = ("inventory", "booking", "profile")
SERVICES = STATELESS + STATEFUL

# synthetic service time per endpoint, milliseconds
DEFAULT_DELAYS = {"search": 20.0, "quote": 10.0, "recommend": 15.0, "optimize": 0.0, "booking": 10.0}


@dataclass(frozen=True)
class WorkModel:
    """Synthetic per-endpoint cost: a blocking delay and optional CPU busy-work."""

    delay_ms: Mapping = field(default_factory=lambda: dict(DEFAULT_DELAYS))
    cpu_units: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.delay_ms.values()) or any(v < 0 for v in self.cpu_units.values()):
            raise ValueError("work model costs must be non-negative")

    @classmethod
    def none(cls) -> "WorkModel":
        return cls(delay_ms={}, cpu_units={})

    def to_dict(self) -> dict:
        return {"delay_ms": dict(self.delay_ms), "cpu_units": dict(self.cpu_units)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkModel":
        return cls(dict(d.get("delay_ms", DEFAULT_DELAYS)), dict(d.get("cpu_units", {})))


@dataclass(frozen=True)
class ServiceConfig:
    work: WorkModel = field(default_factory=WorkModel)
    ga: GaConfig = field(default_factory=lambda: GaConfig(population_size=30, generations=60,
                                                          convergence_patience=15))
    hold_ttl_ms: int = 30_000
    idempotency_ttl_ms: int = 3_600_000
    decline_threshold: float = 10_000.0
    recommend_lambda: float = 0.5
    recommend_k: int = 10
    bus_depth: int = 1024
    bus_timeout_s: float = 5.0
    auth_token: str = "resa-dev-token"
    downstream_timeout_ms: int = 5_000
    capacity_override: int = 0         # >0 replaces every catalog capacity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["work"] = self.work.to_dict()
        d["ga"] = self.ga.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ServiceConfig":
        d = dict(d)
        if "work" in d:
            d["work"] = WorkModel.from_dict(d["work"])
        if "ga" in d:
            d["ga"] = GaConfig.from_dict(d["ga"])
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ServiceSpec:
    port: int = 0
    replicas: int = 1
    workers: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


def _micro_services() -> dict:
    return {name: ServiceSpec(replicas=2 if name in STATELESS else 1) for name in SERVICES}


@dataclass(frozen=True)
class DeploymentSpec:
    """Monolith: one process, one pool of ``workers`` threads, one coarse lock.

    Microservices: one process per service replica, each with its own pool,
    per-key locking in the stateful stores, and a round-robin gateway.
    """

    mode: str = "micro"
    host: str = "127.0.0.1"
    port: int = 0                      # monolith port or gateway port
    workers: int = 4                   # monolith pool size
    max_queue: int = 256               # admission bound beyond busy workers, per process
    services: Mapping = field(default_factory=_micro_services)
    sharded: bool = True               # per-key locks (micro) vs one coarse lock (mono)
    config: ServiceConfig = field(default_factory=ServiceConfig)

    def __post_init__(self):
        mode = {"mono": "mono", "monolith": "mono", "micro": "micro", "microservices": "micro"}.get(self.mode)
        if mode is None:
            raise ValueError(f"unknown deployment mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        services = {k: v if isinstance(v, ServiceSpec) else ServiceSpec(**v) for k, v in self.services.items()}
        for name, s in services.items():
            if name not in SERVICES:
                raise ValueError(f"unknown service {name!r}")
            if name in STATEFUL and s.replicas != 1:
                raise ValueError(f"stateful service {name} must run a single instance")
        object.__setattr__(self, "services", services)
        if mode == "mono":
            object.__setattr__(self, "sharded", False)

    @classmethod
    def monolith(cls, **kw) -> "DeploymentSpec":
        return cls(mode="mono", **kw)

    @classmethod
    def microservices(cls, replicas: int = 2, workers: int = 4, **kw) -> "DeploymentSpec":
        services = {n: ServiceSpec(replicas=replicas if n in STATELESS else 1, workers=workers) for n in SERVICES}
        return cls(mode="micro", services=services, **kw)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "host": self.host, "port": self.port, "workers": self.workers,
            "max_queue": self.max_queue, "sharded": self.sharded,
            "services": {k: v.to_dict() for k, v in self.services.items()},
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeploymentSpec":
        d = dict(d)
        if "config" in d:
            d["config"] = ServiceConfig.from_dict(d["config"])
        if "services" in d:
            d["services"] = {k: ServiceSpec(**v) for k, v in d["services"].items()}
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "DeploymentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))
