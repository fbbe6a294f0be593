"""End-to-end scenario runs: data, models, both deployments, load, comparison.

Stages run in order and each records the files it wrote. A failing stage
stops the run, but everything written so far stays on disk and the manifest
is still produced, naming the failed stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

from . import plots
from .bench.compare import compare_reports, render_report
from .bench.load import LoadProfile, Workload, run_load
from .bench.ramp import ramp_to_failure
from .forecast import save_model, train_bundle
from .model import TripRequest
from .optimizer import GaConfig, evolve
from .services.config import DeploymentSpec
from .services.deploy import run_deployment
from .synthgen import ScenarioParams, generate, load_scenario, save_scenario

log = logging.getLogger("resa.run")

STAGES = ("datagen", "train", "mono", "micro", "compare", "optimize")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
        self.message = message


@dataclass
class ScenarioRunSpec:
    scenario_dir: str
    out_dir: str
    params: Mapping | None = None        # generate the scenario with these overrides; None = reuse bundle
    mono: Mapping = field(default_factory=lambda: DeploymentSpec.monolith().to_dict())
    micro: Mapping = field(default_factory=lambda: DeploymentSpec.microservices().to_dict())
    profile: Mapping = field(default_factory=lambda: LoadProfile().to_dict())
    ramp: Mapping | None = None          # {"start", "step", "max", optional "profile" overrides}
    seed: int = 0
    plots: bool = True

    def __post_init__(self):
        if self.ramp is not None:
            missing = {"start", "step", "max"} - set(self.ramp)
            if missing:
                raise ValueError(f"ramp needs {', '.join(sorted(missing))}")
        DeploymentSpec.from_dict(self.mono)
        DeploymentSpec.from_dict(self.micro)
        LoadProfile.from_dict(self.profile)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioRunSpec":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def load(cls, path) -> "ScenarioRunSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    def __init__(self, spec: ScenarioRunSpec):
        self.spec = spec
        self.out = Path(spec.out_dir)
        self.artifacts: list[dict] = []
        self.stages: list[dict] = []

    def add(self, stage: str, path) -> Path:
        path = Path(path)
        self.artifacts.append({"stage": stage, "path": str(path)})
        return path

    def stage(self, name: str, fn):
        t0 = time.monotonic()
        log.info("stage %s", name)
        try:
            out = fn()
        except StageError:
            self.stages.append({"stage": name, "status": "failed", "seconds": time.monotonic() - t0})
            raise
        except Exception as exc:
            self.stages.append({"stage": name, "status": "failed", "seconds": time.monotonic() - t0})
            raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
        self.stages.append({"stage": name, "status": "ok", "seconds": time.monotonic() - t0})
        return out

    def manifest(self, status: str, error: str = "") -> Path:
        entries = []
        for a in self.artifacts:
            p = Path(a["path"])
            if p.exists():
                entries.append({**a, "bytes": p.stat().st_size, "sha256": _sha256(p)})
        path = self.out / "manifest.json"
        path.write_text(json.dumps({
            "status": status, "error": error, "seed": self.spec.seed, "spec": self.spec.to_dict(),
            "stages": self.stages, "artifacts": entries,
        }, indent=1, sort_keys=True))
        return path


def _datagen(run: _Run):
    spec = run.spec
    sdir = Path(spec.scenario_dir)
    if spec.params is None:
        if not (sdir / "meta.json").exists():
            raise StageError("datagen", f"missing scenario bundle at {sdir}")
        return load_scenario(sdir)
    params = ScenarioParams.from_dict({**dict(spec.params), "seed": spec.seed})
    scenario = generate(params)
    save_scenario(scenario, sdir)
    for name in ("catalog.json", "users.json", "history.json", "meta.json"):
        run.add("datagen", sdir / name)
    return scenario


def _bench(run: _Run, mode: str, dspec: dict, workload: Workload, model_path: Path):
    spec = run.spec
    profile = LoadProfile.from_dict({**dict(spec.profile), "seed": spec.seed})
    with run_deployment(DeploymentSpec.from_dict(dspec), spec.scenario_dir, model_path) as dep:
        pids = list(dep.pids().values())
        report = run_load(dep.base_url, profile, workload, pids=pids, mode=mode)
        report.save(run.add(mode, run.out / f"{mode}.json"))
        ramp = None
        if spec.ramp is not None:
            base = {**dict(spec.profile), **dict(spec.ramp.get("profile", {})), "seed": spec.seed}
            ramp = ramp_to_failure(dep.base_url, int(spec.ramp["start"]), int(spec.ramp["step"]),
                                   int(spec.ramp["max"]), LoadProfile.from_dict(base), workload,
                                   pids=pids, mode=mode)
            ramp.save(run.add(mode, run.out / f"ramp-{mode}.json"))
    return report, ramp


def run_scenario(spec: ScenarioRunSpec) -> dict:
    """Execute every stage; returns the manifest dict. Raises StageError on failure."""
    run = _Run(spec)
    try:
        run.out.mkdir(parents=True, exist_ok=True)
        probe = run.out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise StageError("datagen", f"output dir not writable: {exc}") from None
    try:
        scenario = run.stage("datagen", lambda: _datagen(run))

        def train():
            path = run.add("train", run.out / "model.json")
            save_model(train_bundle(scenario.observations, scenario.demand_log), path)
            return path

        model_path = run.stage("train", train)
        workload = Workload.from_scenario(scenario)
        mono, mono_ramp = run.stage("mono", lambda: _bench(run, "mono", dict(spec.mono), workload, model_path))
        micro, micro_ramp = run.stage("micro", lambda: _bench(run, "micro", dict(spec.micro), workload, model_path))

        def compare():
            cmp = compare_reports(mono, micro)
            for fmt, ext in (("csv", "csv"), ("json", "json"), ("markdown", "md")):
                run.add("compare", run.out / f"comparison.{ext}").write_text(render_report(cmp, fmt))
            if spec.plots:
                plots.plot_comparison(cmp, run.add("compare", run.out / "comparison.png"))
                plots.plot_latency_histogram({"mono": mono, "micro": micro},
                                             run.add("compare", run.out / "latency.png"))
                if mono_ramp is not None:
                    plots.plot_ramp({"mono": mono_ramp, "micro": micro_ramp}, run.add("compare", run.out / "ramp.png"))
            return cmp

        run.stage("compare", compare)

        def optimize():
            if not workload.trips:
                return None
            req = TripRequest.from_dict(workload.trips[0])
            ga = replace(GaConfig.from_dict(dict(spec.micro).get("config", {}).get("ga", {})), seed=spec.seed)
            res = evolve(scenario.catalog, req, ga)
            trace = {"seed": spec.seed, "request": req.to_dict(), "fitness": res.fitness,
                     "itinerary": res.itinerary.to_dict(), **res.trace.to_dict()}
            run.add("optimize", run.out / "ga-trace.json").write_text(json.dumps(trace, indent=1, sort_keys=True))
            if spec.plots:
                plots.plot_ga_trace(trace, run.add("optimize", run.out / "ga-trace.png"))
            return trace

        run.stage("optimize", optimize)
    except StageError as exc:
        run.manifest("failed", str(exc))
        raise
    path = run.manifest("ok")
    return json.loads(path.read_text())
