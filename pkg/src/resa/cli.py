"""``resa`` command line.

Logs go to stderr (level from ``RESA_LOG``, default INFO); machine-readable
output goes only to the files named by flags. Exit status is 0 on success,
1 on a failed stage or run, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from dataclasses import replace
from pathlib import Path

log = logging.getLogger("resa")


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True))


def _profile(args):
    from .bench.load import LoadProfile

    d = json.loads(Path(args.profile).read_text()) if args.profile else {}
    for key in ("concurrency", "duration_s", "warmup_s", "think_time_ms"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if args.seed is not None:
        d["seed"] = args.seed
    return LoadProfile.from_dict(d)


# ---------------------------------------------------------------- commands

def cmd_datagen(args) -> int:
    from .synthgen import ScenarioParams, generate, save_scenario

    over = json.loads(Path(args.params).read_text()) if args.params else {}
    for flag, key in (("cities", "n_cities"), ("users", "n_users"), ("noise", "noise_sigma"),
                      ("days", "n_history_days"), ("options", "options_per_route")):
        v = getattr(args, flag)
        if v is not None:
            over[key] = v
    over["seed"] = args.seed if args.seed is not None else over.get("seed", 7)
    sc = generate(ScenarioParams.from_dict(over))
    save_scenario(sc, args.out)
    log.info("scenario seed=%d: %d options, %d users, %d observations -> %s", sc.params.seed,
             len(sc.catalog.options), len(sc.users), len(sc.observations), args.out)
    return 0


def cmd_train(args) -> int:
    from .forecast import (default_class_edges, fit_demand, fit_ols, fit_tree, group_by_kind, save_model,
                           train_bundle)
    from .synthgen import load_scenario

    sc = load_scenario(args.scenario)
    if args.model == "bundle":
        model = train_bundle(sc.observations, sc.demand_log, max_depth=args.max_depth)
    elif args.model == "demand":
        model = fit_demand(sc.demand_log)
    else:
        groups = group_by_kind(sc.observations)
        if args.kind not in groups:
            log.error("no observations of kind %s (have %s)", args.kind, ", ".join(sorted(groups)))
            return 1
        fvs = groups[args.kind]
        if args.model == "ols":
            model = fit_ols(fvs)
        else:
            model = fit_tree(fvs, default_class_edges([fv.label for fv in fvs]), args.max_depth)
    d = model.to_dict()
    d["seed"] = sc.params.seed
    _write_json(args.out, d)
    log.info("trained %s model -> %s", args.model, args.out)
    return 0


def cmd_optimize(args) -> int:
    from .model import TripRequest
    from .optimizer import GaConfig, evolve
    from .sustainability import greener_alternatives
    from .synthgen import load_scenario

    sc = load_scenario(args.scenario)
    req = TripRequest.from_dict(json.loads(Path(args.request).read_text()))
    ga = GaConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else GaConfig()
    if args.seed is not None:
        ga = replace(ga, seed=args.seed)
    res = evolve(sc.catalog, req, ga)
    out = {"seed": ga.seed, "fitness": res.fitness, "itinerary": res.itinerary.to_dict(),
           "alternatives": [a.to_dict() for a in greener_alternatives(res.itinerary, sc.catalog, None, req)]}
    if args.out:
        _write_json(args.out, out)
    if args.trace:
        _write_json(args.trace, {"seed": ga.seed, **res.trace.to_dict()})
        if args.plot:
            from . import plots
            plots.plot_ga_trace(res.trace.to_dict(), args.plot)
    log.info("best fitness %.6f after %d generations", res.fitness, res.trace.generations)
    return 0


def cmd_serve(args) -> int:
    from .services.config import DeploymentSpec
    from .services.deploy import run_deployment

    d = json.loads(Path(args.config).read_text()) if args.config else {}
    d["mode"] = args.mode
    if args.port is not None:
        d["port"] = args.port
    spec = DeploymentSpec.from_dict(d)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    with run_deployment(spec, args.scenario, args.model) as dep:
        info = {"mode": spec.mode, "base_url": dep.base_url, "urls": dep.urls(), "pids": dep.pids()}
        if args.info:
            _write_json(args.info, info)
        log.info("serving %s at %s (Ctrl-C to stop)", spec.mode, dep.base_url)
        stop.wait()
    return 0


def _workload(args):
    from .bench.load import Workload
    from .synthgen import load_scenario

    return Workload.from_scenario(load_scenario(args.scenario))


def _pids(args) -> list[int]:
    return [int(p) for p in (args.pid or [])]


def cmd_bench(args) -> int:
    from .bench.load import run_load

    report = run_load(args.target, _profile(args), _workload(args), pids=_pids(args), mode=args.mode)
    report.save(args.out)
    log.info("%s: %.1f req/s, mean %.1f ms, p99 %.1f ms, errors %.4f", args.mode or args.target,
             report.throughput, report.latency["mean_ms"], report.latency["p99_ms"], report.error_rate)
    return 0


def cmd_ramp(args) -> int:
    from .bench.ramp import FailureThresholds, ramp_to_failure

    th = FailureThresholds(args.max_error_rate, args.max_p99_ms)
    res = ramp_to_failure(args.target, args.start, args.step, args.max, _profile(args), _workload(args),
                          pids=_pids(args), mode=args.mode, thresholds=th)
    res.save(args.out)
    if args.plot:
        from . import plots
        plots.plot_ramp({args.mode or "target": res}, args.plot)
    log.info("failure point: %s", res.failure_point if res.failure_point is not None else f"none <= {args.max}")
    return 0


def _emit_comparison(cmp, args) -> None:
    from .bench.compare import render_report

    for fmt, path in (("csv", args.csv), ("json", args.json), ("markdown", args.markdown)):
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(render_report(cmp, fmt))
    if args.plot:
        from . import plots
        plots.plot_comparison(cmp, args.plot)
    for w in cmp.warnings:
        log.warning("%s", w)


def cmd_compare(args) -> int:
    from .bench.compare import compare_reports
    from .bench.load import BenchReport

    cmp = compare_reports(BenchReport.load(args.baseline), BenchReport.load(args.optimized))
    _emit_comparison(cmp, args)
    if cmp.speedup is not None:
        log.info("speedup %.3f, latency ratio %s", cmp.speedup, cmp.ratio("Average Response Time"))
    return 0


def cmd_report(args) -> int:
    from .bench.compare import Comparison, compare_reports, render_report
    from .bench.load import BenchReport

    if args.comparison:
        cmp = Comparison.from_dict(json.loads(Path(args.comparison).read_text()))
    elif len(args.reports) == 2:
        cmp = compare_reports(BenchReport.load(args.reports[0]), BenchReport.load(args.reports[1]))
    else:
        log.error("report needs --comparison FILE or two report files")
        return 2
    if args.table1:
        cmp = cmp.table1()
    text = render_report(cmp, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.plot:
        from . import plots
        plots.plot_comparison(cmp, args.plot)
    return 0


def cmd_run(args) -> int:
    from .orchestrate import ScenarioRunSpec, StageError, run_scenario

    if args.spec:
        d = json.loads(Path(args.spec).read_text())
    else:
        d = {"scenario_dir": args.scenario or str(Path(args.out) / "scenario"), "out_dir": args.out}
        if not args.reuse:
            d["params"] = {"n_cities": args.cities, "n_users": args.users}
        d["profile"] = {"concurrency": args.concurrency, "duration_s": args.duration_s, "warmup_s": args.warmup_s}
        if args.ramp_max:
            d["ramp"] = {"start": args.ramp_start, "step": args.ramp_step, "max": args.ramp_max}
    if args.out:
        d["out_dir"] = args.out
    if args.seed is not None:
        d["seed"] = args.seed
    spec = ScenarioRunSpec.from_dict(d)
    try:
        manifest = run_scenario(spec)
    except StageError as exc:
        log.error("%s", exc)
        return 1
    log.info("run complete: %d artifacts, manifest at %s", len(manifest["artifacts"]),
             Path(spec.out_dir) / "manifest.json")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="resa", description="Travel-reservation testbed and benchmark harness.",
                                formatter_class=fmt)
    p.add_argument("--version", action="version", version="resa 0.1.0")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, fn, help):
        sp = sub.add_parser(name, help=help, description=help, formatter_class=fmt)
        sp.set_defaults(fn=fn)
        sp.add_argument("--seed", type=int, default=None, help="seed recorded in every output")
        return sp

    sp = cmd("datagen", cmd_datagen, "generate a synthetic scenario bundle")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--params", help="JSON file with generator parameters")
    sp.add_argument("--cities", type=int, help="number of cities (default 5)")
    sp.add_argument("--users", type=int, help="number of users (default 50)")
    sp.add_argument("--noise", type=float, help="price noise sigma (default 4.0)")
    sp.add_argument("--days", type=int, help="days of price history (default 365)")
    sp.add_argument("--options", type=int, help="transport options per route (default 3)")

    sp = cmd("train", cmd_train, "fit a forecasting model on a scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--model", choices=("ols", "tree", "demand", "bundle"), default="bundle")
    sp.add_argument("--kind", default="Flight", help="transport kind for ols/tree")
    sp.add_argument("--max-depth", type=int, default=4)
    sp.add_argument("--out", required=True)

    sp = cmd("optimize", cmd_optimize, "run the itinerary GA on one trip request")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--request", required=True, help="trip request JSON")
    sp.add_argument("--config", help="GA config JSON")
    sp.add_argument("--out", help="result JSON")
    sp.add_argument("--trace", help="per-generation trace JSON")
    sp.add_argument("--plot", help="trace figure (PNG), needs --trace")

    sp = cmd("serve", cmd_serve, "run a deployment until interrupted")
    sp.add_argument("--mode", choices=("mono", "micro"), required=True)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--config", help="deployment spec JSON")
    sp.add_argument("--model", help="forecast bundle (trained from the scenario if absent)")
    sp.add_argument("--port", type=int, help="monolith or gateway port (0 = any)")
    sp.add_argument("--info", help="write base URL, process URLs and pids to this JSON file")

    def load_flags(sp):
        sp.add_argument("--target", required=True, help="base URL of the deployment")
        sp.add_argument("--scenario", required=True, help="scenario the requests are drawn from")
        sp.add_argument("--profile", help="load profile JSON")
        sp.add_argument("--concurrency", type=int, help="override profile concurrency (default 200)")
        sp.add_argument("--duration-s", dest="duration_s", type=float, help="measurement window (default 10)")
        sp.add_argument("--warmup-s", dest="warmup_s", type=float, help="excluded warmup (default 2)")
        sp.add_argument("--think-time-ms", dest="think_time_ms", type=float, help="think time (default 0)")
        sp.add_argument("--pid", type=int, action="append", help="process to sample (repeatable)")
        sp.add_argument("--mode", default="", help="label stored in the report")
        sp.add_argument("--out", required=True)

    sp = cmd("bench", cmd_bench, "closed-loop load against a running deployment")
    load_flags(sp)

    sp = cmd("ramp", cmd_ramp, "increase concurrency until the failure threshold")
    load_flags(sp)
    sp.add_argument("--start", type=int, default=50)
    sp.add_argument("--step", type=int, default=50)
    sp.add_argument("--max", type=int, default=2000)
    sp.add_argument("--max-error-rate", type=float, default=0.01)
    sp.add_argument("--max-p99-ms", type=float, default=5000.0)
    sp.add_argument("--plot", help="ramp figure (PNG)")

    def out_flags(sp):
        sp.add_argument("--csv", help="comparison CSV")
        sp.add_argument("--json", help="comparison JSON")
        sp.add_argument("--markdown", help="comparison markdown")
        sp.add_argument("--plot", help="comparison figure (PNG)")

    sp = cmd("compare", cmd_compare, "compare a baseline and an optimized bench report")
    sp.add_argument("baseline")
    sp.add_argument("optimized")
    out_flags(sp)

    sp = cmd("report", cmd_report, "render a comparison as csv, json or markdown")
    sp.add_argument("reports", nargs="*", help="baseline and optimized report JSON")
    sp.add_argument("--comparison", help="comparison JSON instead of two reports")
    sp.add_argument("--format", choices=("csv", "json", "markdown"), default="markdown")
    sp.add_argument("--table1", action="store_true", help="only the four headline rows")
    sp.add_argument("--out", help="output file (stdout if absent)")
    sp.add_argument("--plot", help="comparison figure (PNG)")

    sp = cmd("run", cmd_run, "full scenario: datagen, train, mono and micro benches, compare")
    sp.add_argument("--spec", help="scenario run spec JSON (flags below are ignored except --out/--seed)")
    sp.add_argument("--out", help="output directory", default="resa-run")
    sp.add_argument("--scenario", help="scenario directory (default OUT/scenario)")
    sp.add_argument("--reuse", action="store_true", help="use an existing scenario instead of generating")
    sp.add_argument("--cities", type=int, default=5)
    sp.add_argument("--users", type=int, default=50)
    sp.add_argument("--concurrency", type=int, default=200)
    sp.add_argument("--duration-s", dest="duration_s", type=float, default=10.0)
    sp.add_argument("--warmup-s", dest="warmup_s", type=float, default=2.0)
    sp.add_argument("--ramp-start", type=int, default=50)
    sp.add_argument("--ramp-step", type=int, default=50)
    sp.add_argument("--ramp-max", type=int, default=0, help="0 skips the ramp")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RESA_LOG", "INFO").upper(), stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    except Exception as exc:  # noqa: BLE001  top-level guard: report, non-zero exit
        log.exception("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
