"""Figures written next to the CSV/JSON artifacts (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}
COLORS = {"baseline": "#8c8c8c", "optimized": "#2b6ca3"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_comparison(comparison, path, title: str = "") -> Path:
    """One small bar pair per headline metric (units differ, so no shared axis)."""
    rows = comparison.table1().rows
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, max(1, len(rows)), figsize=(2.2 * max(1, len(rows)), 2.6), squeeze=False)
        for ax, r in zip(axes[0], rows):
            vals = [r.baseline or 0.0, r.optimized or 0.0]
            ax.bar([0, 1], vals, color=[COLORS["baseline"], COLORS["optimized"]], width=0.6)
            ax.set_xticks([0, 1], [comparison.baseline_mode or "baseline", comparison.optimized_mode or "optimized"])
            ax.set_title(f"{r.metric}\n({r.unit})")
            if r.ratio is not None:
                ax.annotate(f"x{r.ratio:.2f}", (1, vals[1]), ha="center", va="bottom")
        if not rows:
            axes[0][0].set_axis_off()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_ramp(ramps: dict, path) -> Path:
    """p95 latency and throughput against concurrency, one line per deployment."""
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3))
        for mode, res in sorted(ramps.items()):
            cs = res.concurrencies()
            line, = a1.plot(cs, [r.latency["p95_ms"] for _, r in res.steps], marker="o", ms=3, label=mode)
            a2.plot(cs, [r.throughput for _, r in res.steps], marker="o", ms=3, color=line.get_color(), label=mode)
            if res.failure_point is not None:
                for ax in (a1, a2):
                    ax.axvline(res.failure_point, color=line.get_color(), ls=":", lw=1)
        a1.set_xlabel("concurrent users")
        a1.set_ylabel("p95 latency (ms)")
        a1.set_yscale("log")
        a2.set_xlabel("concurrent users")
        a2.set_ylabel("throughput (req/s)")
        a1.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_ga_trace(trace: dict, path) -> Path:
    """Best and mean population fitness per generation."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 2.8))
        gens = range(len(trace["best_fitness"]))
        ax.plot(gens, trace["best_fitness"], label="best", color=COLORS["optimized"])
        ax.plot(gens, trace["mean_fitness"], label="mean", color=COLORS["baseline"])
        ax.set_xlabel("generation")
        ax.set_ylabel("fitness")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def plot_latency_histogram(reports: dict, path) -> Path:
    """Bucketed client latency distributions, one step line per report."""
    from .bench.histogram import BOUNDS_MS, LatencyHistogram

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 2.8))
        for name, rep in sorted(reports.items()):
            h = LatencyHistogram.from_dict(rep.histogram)
            total = max(1, h.n)
            ax.step(BOUNDS_MS, [c / total for c in h.counts[: len(BOUNDS_MS)]], where="post", label=name)
        ax.set_xscale("log")
        ax.set_xlabel("latency (ms)")
        ax.set_ylabel("fraction of requests")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
