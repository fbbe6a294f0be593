"""Inventory with TTL holds.

``available = capacity - committed - active holds`` never goes negative.
Multi-item holds are all-or-nothing. With ``sharded=True`` every option has
its own lock (acquired in id order); otherwise one re-entrant lock guards
the whole store.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping


class SoldOut(Exception):
    def __init__(self, option_id: str):
        super().__init__(f"sold out: {option_id}")
        self.option_id = option_id


class UnknownHold(KeyError):
    pass


class HoldExpired(Exception):
    pass


class LockSet:
    """Per-key locks, or a single shared lock when not sharded."""

    def __init__(self, sharded: bool, coarse: threading.RLock | None = None):
        self.sharded = sharded
        self._coarse = coarse or threading.RLock()
        self._locks: dict[str, threading.RLock] = {}
        self._guard = threading.Lock()

    def get(self, key: str) -> threading.RLock:
        if not self.sharded:
            return self._coarse
        with self._guard:
            lock = self._locks.get(key)
            if lock is None:
                lock = self._locks[key] = threading.RLock()
            return lock

    def acquire_all(self, keys: Iterable[str]) -> list:
        locks = []
        seen = set()
        for k in sorted(set(keys)):
            lk = self.get(k)
            if id(lk) in seen:
                continue
            seen.add(id(lk))
            lk.acquire()
            locks.append(lk)
        return locks

    @staticmethod
    def release_all(locks: list) -> None:
        for lk in reversed(locks):
            lk.release()


@dataclass
class Hold:
    hold_id: str
    items: tuple          # ((option_id, units), ...)
    expires_at: float     # seconds, wall clock
    state: str = "active"  # active | committed | released | expired


class InventoryStore:
    def __init__(self, capacities: Mapping[str, int], sharded: bool = True,
                 coarse_lock: threading.RLock | None = None, clock: Callable[[], float] = time.time):
        self.capacity = dict(capacities)
        self.committed = {k: 0 for k in self.capacity}
        self.held = {k: 0 for k in self.capacity}
        self._holds: dict[str, Hold] = {}
        self._by_option: dict[str, set] = {k: set() for k in self.capacity}
        self.locks = LockSet(sharded, coarse_lock)
        self._reg = threading.Lock()
        self._ids = itertools.count(1)
        self.clock = clock

    def _expire(self, option_id: str, now: float) -> None:
        # caller holds the option lock
        for hid in list(self._by_option[option_id]):
            h = self._holds[hid]
            if h.state == "active" and h.expires_at <= now:
                self._drop(h, "expired")

    def _drop(self, h: Hold, state: str) -> None:
        for oid, units in h.items:
            self.held[oid] -= units
            self._by_option[oid].discard(h.hold_id)
        h.state = state

    def _check(self, option_id: str) -> None:
        if option_id not in self.capacity:
            raise KeyError(option_id)

    def available(self, option_id: str) -> int:
        self._check(option_id)
        with self.locks.get(option_id):
            self._expire(option_id, self.clock())
            return self.capacity[option_id] - self.committed[option_id] - self.held[option_id]

    def snapshot(self, option_id: str) -> dict:
        self._check(option_id)
        with self.locks.get(option_id):
            self._expire(option_id, self.clock())
            return {
                "option_id": option_id,
                "capacity": self.capacity[option_id],
                "committed": self.committed[option_id],
                "held": self.held[option_id],
                "available": self.capacity[option_id] - self.committed[option_id] - self.held[option_id],
            }

    def hold(self, items: Iterable[tuple[str, int]], ttl_ms: int) -> Hold:
        """Reserve every item or none; raises :class:`SoldOut` on the first shortfall."""
        merged: dict[str, int] = {}
        for oid, units in items:
            self._check(oid)
            if units < 0:
                raise ValueError("units must be >= 0")
            merged[oid] = merged.get(oid, 0) + int(units)
        locks = self.locks.acquire_all(merged)
        try:
            now = self.clock()
            for oid in sorted(merged):
                self._expire(oid, now)
                free = self.capacity[oid] - self.committed[oid] - self.held[oid]
                if merged[oid] > free:
                    raise SoldOut(oid)
            with self._reg:
                hid = f"hold-{next(self._ids)}"
            h = Hold(hid, tuple(sorted(merged.items())), now + ttl_ms / 1000.0)
            for oid, units in h.items:
                self.held[oid] += units
                self._by_option[oid].add(hid)
            with self._reg:
                self._holds[hid] = h
            return h
        finally:
            LockSet.release_all(locks)

    def _get(self, hold_id: str) -> Hold:
        with self._reg:
            h = self._holds.get(hold_id)
        if h is None:
            raise UnknownHold(hold_id)
        return h

    def commit(self, hold_id: str) -> Hold:
        h = self._get(hold_id)
        locks = self.locks.acquire_all(oid for oid, _ in h.items)
        try:
            if h.state == "committed":
                return h
            if h.state == "active" and h.expires_at <= self.clock():
                self._drop(h, "expired")
            if h.state != "active":
                raise HoldExpired(f"hold {hold_id} is {h.state}")
            self._drop(h, "committed")
            for oid, units in h.items:
                self.committed[oid] += units
            return h
        finally:
            LockSet.release_all(locks)

    def release(self, hold_id: str) -> Hold:
        h = self._get(hold_id)
        locks = self.locks.acquire_all(oid for oid, _ in h.items)
        try:
            if h.state == "active":
                self._drop(h, "released")
            return h
        finally:
            LockSet.release_all(locks)

    def check_conservation(self) -> list[str]:
        """Violations of the accounting invariants (empty when consistent)."""
        bad = []
        locks = self.locks.acquire_all(self.capacity)
        try:
            held = {k: 0 for k in self.capacity}
            committed = {k: 0 for k in self.capacity}
            for h in self._holds.values():
                for oid, u in h.items:
                    if h.state == "active":
                        held[oid] += u
                    elif h.state == "committed":
                        committed[oid] += u
            for k in self.capacity:
                if held[k] != self.held[k] or committed[k] != self.committed[k]:
                    bad.append(f"{k}: ledger mismatch")
                if self.committed[k] + self.held[k] > self.capacity[k]:
                    bad.append(f"{k}: overbooked")
        finally:
            LockSet.release_all(locks)
        return bad
