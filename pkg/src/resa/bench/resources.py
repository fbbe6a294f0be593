"""Per-process CPU and memory sampling, and the synthetic cost model.

Memory is the proportional set size (PSS) where the OS reports it, so pages
shared between forked service processes are not counted once per process;
resident set size is the fallback.
"""

from __future__ import annotations

import threading
import time
from typing import Iterable

import psutil

# unit prices per CPU-hour and per GB-hour; synthetic, in the range of
# public container pricing
CPU_PRICE = 0.04048
MEM_PRICE = 0.004445


def _memory(p: psutil.Process) -> int:
    try:
        return int(p.memory_full_info().pss)
    except (AttributeError, psutil.AccessDenied):
        return int(p.memory_info().rss)


def _cpu(p: psutil.Process) -> float:
    t = p.cpu_times()
    return t.user + t.system


class ResourceSampler:
    """Samples a fixed process set every ``interval`` seconds on a background thread."""

    def __init__(self, pids: Iterable[int], interval: float = 1.0):
        self.pids = list(pids)
        self.interval = interval
        self.samples: list[tuple[float, float, int]] = []
        self.truncated = False
        self._procs = {pid: psutil.Process(pid) for pid in self.pids}
        self._cpu0: dict[int, float] = {}
        self._cpu_last: dict[int, float] = {}
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._t0 = 0.0
        self._t_end = 0.0
        self._mem_integral = 0.0

    def _read(self) -> tuple[dict, int]:
        cpu, mem = {}, 0
        for pid, p in self._procs.items():
            try:
                cpu[pid] = _cpu(p)
                mem += _memory(p)
            except (psutil.NoSuchProcess, psutil.ZombieProcess):
                self.truncated = True
        return cpu, mem

    def start(self) -> "ResourceSampler":
        cpu, mem = self._read()
        self._cpu0 = dict(cpu)
        self._cpu_last = dict(cpu)
        self._t0 = time.monotonic()
        self._last = (self._t0, mem)
        self._thread = threading.Thread(target=self._run, name="resource-sampler", daemon=True)
        self._thread.start()
        return self

    def _tick(self) -> None:
        now = time.monotonic()
        cpu, mem = self._read()
        t_prev, mem_prev = self._last
        dt = now - t_prev
        used = sum(cpu[p] - self._cpu_last.get(p, cpu[p]) for p in cpu)
        self._cpu_last.update(cpu)
        self._mem_integral += 0.5 * (mem + mem_prev) * dt
        self.samples.append((now - self._t0, 100.0 * used / dt if dt > 0 else 0.0, mem))
        self._last = (now, mem)

    def _run(self) -> None:
        while not self._stop.wait(self.interval):
            self._tick()

    def stop(self) -> "ResourceSampler":
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self._tick()
        self._t_end = time.monotonic()
        return self

    def series(self) -> dict:
        cpu_s = sum(self._cpu_last[p] - self._cpu0[p] for p in self._cpu0 if p in self._cpu_last)
        wall = self._t_end - self._t0
        return {
            "interval_s": self.interval,
            "pids": self.pids,
            "samples": [[round(t, 4), round(c, 3), m] for t, c, m in self.samples],
            "wall_s": wall,
            "cpu_seconds": cpu_s,
            "per_process_cpu_s": {str(p): self._cpu_last[p] - self._cpu0[p] for p in self._cpu0 if p in self._cpu_last},
            "gb_seconds": self._mem_integral / 1e9,
            "mean_cpu_pct": 100.0 * cpu_s / wall if wall > 0 else 0.0,
            "mean_mem_bytes": self._mem_integral / wall if wall > 0 else 0.0,
            "truncated": self.truncated,
        }


def sample_resources(pids: Iterable[int], interval: float = 1.0, duration: float = 5.0) -> dict:
    """Blocking sampler: watch ``pids`` for ``duration`` seconds."""
    s = ResourceSampler(pids, interval).start()
    time.sleep(duration)
    return s.stop().series()


def synthetic_cost(resources: dict, completed: int, cpu_price: float | None = None,
                   mem_price: float | None = None) -> dict:
    cpu_price = CPU_PRICE if cpu_price is None else cpu_price
    mem_price = MEM_PRICE if mem_price is None else mem_price
    cpu_cost = resources.get("cpu_seconds", 0.0) * cpu_price / 3600.0
    mem_cost = resources.get("gb_seconds", 0.0) * mem_price / 3600.0
    total = cpu_cost + mem_cost
    return {
        "cpu_price_per_hour": cpu_price,
        "mem_price_per_gb_hour": mem_price,
        "cpu_cost": cpu_cost,
        "mem_cost": mem_cost,
        "total": total,
        "per_request": total / completed if completed else None,
    }
