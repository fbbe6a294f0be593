"""Booking saga: reserve -> pay -> confirm, with compensating releases.

Booking ids and payment references are derived from the idempotency key,
so the same request sequence yields the same records in every deployment.
"""

from __future__ import annotations

import enum
import hashlib
import http.client
import json
import threading
import time
from dataclasses import dataclass, replace
from typing import Protocol
from urllib.parse import urlsplit

from ..model import Catalog, Itinerary, Kind, validate_itinerary
from .bus import EventBus
from .config import ServiceConfig
from .inventory import HoldExpired, InventoryStore, LockSet, SoldOut, UnknownHold


class Status(str, enum.Enum):
    RESERVED = "Reserved"
    CONFIRMED = "Confirmed"
    CANCELLED = "Cancelled"
    EXPIRED = "Expired"


class BookingError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass(frozen=True)
class BookingRecord:
    booking_id: str
    user_id: str
    itinerary: Itinerary
    status: Status
    idempotency_key: str
    hold_id: str
    hold_expires_at_ms: int
    amount: float
    payment_ref: str | None = None

    def to_dict(self) -> dict:
        return {
            "booking_id": self.booking_id,
            "user_id": self.user_id,
            "itinerary": self.itinerary.to_dict(),
            "status": Status(self.status).value,
            "idempotency_key": self.idempotency_key,
            "hold_expires_at_ms": self.hold_expires_at_ms,
            "amount": self.amount,
            "payment_ref": self.payment_ref,
        }


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class Inventory(Protocol):
    def hold(self, items, ttl_ms: int) -> tuple[str, float]: ...
    def commit(self, hold_id: str) -> None: ...
    def release(self, hold_id: str) -> None: ...


class LocalInventory:
    def __init__(self, store: InventoryStore):
        self.store = store

    def hold(self, items, ttl_ms):
        h = self.store.hold(items, ttl_ms)
        return h.hold_id, h.expires_at

    def commit(self, hold_id):
        self.store.commit(hold_id)

    def release(self, hold_id):
        self.store.release(hold_id)


class RemoteInventory:
    """Inventory service client; one keep-alive connection per worker thread."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        u = urlsplit(base_url)
        self.host, self.port = u.hostname, u.port
        self.timeout = timeout
        self._local = threading.local()

    def _call(self, method: str, path: str, body: dict | None = None) -> tuple[int, dict]:
        data = json.dumps(body).encode() if body is not None else None
        for attempt in (0, 1):
            conn = getattr(self._local, "conn", None)
            if conn is None:
                conn = self._local.conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
            try:
                conn.request(method, path, body=data, headers={"Content-Type": "application/json"})
                resp = conn.getresponse()
                payload = json.loads(resp.read() or b"{}")
                return resp.status, payload
            except (ConnectionError, http.client.HTTPException, OSError):
                conn.close()
                self._local.conn = None
                if attempt:
                    raise BookingError(502, "inventory service unavailable")
        raise AssertionError("unreachable")

    def hold(self, items, ttl_ms):
        status, body = self._call("POST", "/inventory/holds",
                                  {"items": [[o, u] for o, u in items], "ttl_ms": ttl_ms})
        if status == 409:
            raise SoldOut(body.get("option_id", ""))
        if status != 201:
            raise BookingError(502, f"inventory hold failed: {body.get('error')}")
        return body["hold_id"], body["expires_at_ms"] / 1000.0

    def commit(self, hold_id):
        status, body = self._call("POST", f"/inventory/holds/{hold_id}/commit")
        if status == 409:
            raise HoldExpired(body.get("error", ""))
        if status == 404:
            raise UnknownHold(hold_id)
        if status != 200:
            raise BookingError(502, "inventory commit failed")

    def release(self, hold_id):
        status, _ = self._call("POST", f"/inventory/holds/{hold_id}/release")
        if status not in (200, 404):
            raise BookingError(502, "inventory release failed")


class MockPayments:
    """Approves unless the amount exceeds the threshold or a decline is forced."""

    def __init__(self, decline_threshold: float):
        self.decline_threshold = decline_threshold

    def charge(self, booking_id: str, amount: float, force_decline: bool = False) -> str | None:
        if force_decline or amount > self.decline_threshold:
            return None
        return "pay-" + _digest(booking_id)


class BookingService:
    def __init__(self, catalog: Catalog, inventory: Inventory, config: ServiceConfig,
                 bus: EventBus | None = None, locks: LockSet | None = None, clock=time.time):
        self.catalog = catalog
        self.inventory = inventory
        self.config = config
        self.bus = bus or EventBus(config.bus_depth, config.bus_timeout_s)
        self.locks = locks or LockSet(True)
        self.payments = MockPayments(config.decline_threshold)
        self.clock = clock
        self._records: dict[str, BookingRecord] = {}
        self._keys: dict[str, tuple[str, float]] = {}
        self._reg = threading.Lock()

    # -- helpers

    def _units(self, itinerary: Itinerary) -> list[tuple[str, int]]:
        items = []
        for oid in itinerary.slots:
            o = self.catalog[oid]
            items.append((oid, max(1, itinerary.nights) if o.kind is Kind.HOTEL else 1))
        return items

    def _put(self, rec: BookingRecord) -> BookingRecord:
        with self._reg:
            self._records[rec.booking_id] = rec
        return rec

    def get(self, booking_id: str) -> BookingRecord:
        with self.locks.get("booking:" + booking_id):
            rec = self._lookup(booking_id)
            return self._maybe_expire(rec)

    def _lookup(self, booking_id: str) -> BookingRecord:
        with self._reg:
            rec = self._records.get(booking_id)
        if rec is None:
            raise BookingError(404, "unknown booking")
        return rec

    def _maybe_expire(self, rec: BookingRecord) -> BookingRecord:
        if rec.status is Status.RESERVED and rec.hold_expires_at_ms <= self.clock() * 1000.0:
            self.inventory.release(rec.hold_id)
            rec = self._put(replace(rec, status=Status.EXPIRED))
        return rec

    def records(self) -> list[BookingRecord]:
        with self._reg:
            return list(self._records.values())

    # -- saga steps

    def reserve(self, user_id: str, itinerary: Itinerary, idempotency_key: str) -> tuple[BookingRecord, bool]:
        """Place holds on every slot. Returns (record, created)."""
        if not idempotency_key:
            raise BookingError(400, "idempotency_key required")
        violations = validate_itinerary(itinerary, self.catalog) if itinerary.slots else ["empty itinerary"]
        if violations:
            raise BookingError(422, "invalid itinerary: " + "; ".join(violations))
        booking_id = "bk-" + _digest(idempotency_key)
        with self.locks.get("key:" + idempotency_key):
            now = self.clock()
            with self._reg:
                seen = self._keys.get(idempotency_key)
            if seen is not None and seen[1] > now:
                return self.get(seen[0]), False
            amount = round(sum(self.catalog[o].price for o in itinerary.slots), 2)
            try:
                hold_id, expires = self.inventory.hold(self._units(itinerary), self.config.hold_ttl_ms)
            except SoldOut as exc:
                raise BookingError(409, f"sold out: {exc.option_id}") from None
            rec = BookingRecord(booking_id, user_id, itinerary, Status.RESERVED, idempotency_key,
                                hold_id, int(expires * 1000), amount)
            self._put(rec)
            with self._reg:
                self._keys[idempotency_key] = (booking_id, now + self.config.idempotency_ttl_ms / 1000.0)
            return rec, True

    def pay(self, booking_id: str, force_decline: bool = False) -> BookingRecord:
        with self.locks.get("booking:" + booking_id):
            rec = self._maybe_expire(self._lookup(booking_id))
            if rec.payment_ref is not None and rec.status in (Status.RESERVED, Status.CONFIRMED):
                return rec
            if rec.status is not Status.RESERVED:
                raise BookingError(409, f"booking is {rec.status.value}")
            ref = self.payments.charge(booking_id, rec.amount, force_decline)
            if ref is None:
                self.inventory.release(rec.hold_id)
                self._put(replace(rec, status=Status.CANCELLED))
                raise BookingError(402, "payment declined")
            return self._put(replace(rec, payment_ref=ref))

    def confirm(self, booking_id: str) -> BookingRecord:
        with self.locks.get("booking:" + booking_id):
            rec = self._maybe_expire(self._lookup(booking_id))
            if rec.status is Status.CONFIRMED:
                return rec
            if rec.status is not Status.RESERVED:
                raise BookingError(409, f"booking is {rec.status.value}")
            if rec.payment_ref is None:
                raise BookingError(409, "payment required")
            try:
                self.inventory.commit(rec.hold_id)
            except HoldExpired:
                self.inventory.release(rec.hold_id)
                self._put(replace(rec, status=Status.EXPIRED))
                raise BookingError(409, "hold expired") from None
            rec = self._put(replace(rec, status=Status.CONFIRMED))
            self.bus.publish("booking.confirmed", {"booking_id": rec.booking_id, "user_id": rec.user_id})
            return rec

    def cancel(self, booking_id: str) -> BookingRecord:
        with self.locks.get("booking:" + booking_id):
            rec = self._maybe_expire(self._lookup(booking_id))
            if rec.status is Status.CANCELLED:
                return rec
            if rec.status is not Status.RESERVED:
                raise BookingError(409, f"booking is {rec.status.value}")
            self.inventory.release(rec.hold_id)
            return self._put(replace(rec, status=Status.CANCELLED))

    def saga(self, user_id: str, itinerary: Itinerary, idempotency_key: str,
             force_decline: bool = False) -> BookingRecord:
        """All three steps; any failure after the reservation releases the holds."""
        rec, _ = self.reserve(user_id, itinerary, idempotency_key)
        if rec.status is not Status.RESERVED:
            return rec
        try:
            self.pay(rec.booking_id, force_decline)
            return self.confirm(rec.booking_id)
        except BookingError:
            raise
        except Exception:
            self.cancel(rec.booking_id)
            raise

    def expire_stale(self) -> int:
        """Move every overdue reservation to Expired; returns how many moved."""
        n = 0
        for rec in self.records():
            if rec.status is Status.RESERVED and rec.hold_expires_at_ms <= self.clock() * 1000.0:
                if self.get(rec.booking_id).status is Status.EXPIRED:
                    n += 1
        return n
