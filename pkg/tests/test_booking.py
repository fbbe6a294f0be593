import threading

import pytest

from resa.model import Catalog, Itinerary, Kind
from resa.services.booking import BookingError, BookingService, LocalInventory, Status
from resa.services.config import ServiceConfig
from resa.services.inventory import InventoryStore

from instances import hotel, leg


class Clock:
    def __init__(self):
        self.t = 5000.0

    def __call__(self):
        return self.t


def service(capacity=1, clock=None, **cfg):
    cat = Catalog([leg("f", Kind.FLIGHT, "A", "B", 10, 60, price=120.0, cap=capacity),
                   hotel("h", "B", price=80.0, cap=capacity)])
    kw = {"clock": clock} if clock else {}
    store = InventoryStore({o.id: o.capacity for o in cat.options}, **kw)
    svc = BookingService(cat, LocalInventory(store), ServiceConfig(**cfg), **kw)
    return svc, store


def test_capacity_one_two_bookings():
    svc, store = service(1)
    first = svc.saga("u1", Itinerary(("f",)), "k1")
    assert first.status is Status.CONFIRMED and first.amount == 120.0
    with pytest.raises(BookingError) as err:
        svc.saga("u2", Itinerary(("f",)), "k2")
    assert err.value.status == 409 and "sold out" in err.value.message
    assert store.available("f") == 0


def test_idempotency_key_reused():
    svc, store = service(3)
    a, created_a = svc.reserve("u", Itinerary(("f",)), "same")
    b, created_b = svc.reserve("u", Itinerary(("f",)), "same")
    assert created_a and not created_b and a.booking_id == b.booking_id
    assert store.available("f") == 2


def test_payment_decline_releases():
    svc, store = service(2)
    with pytest.raises(BookingError) as err:
        svc.saga("u", Itinerary(("f",)), "k", force_decline=True)
    assert err.value.status == 402
    assert store.available("f") == 2
    rec = svc.records()[0]
    assert svc.get(rec.booking_id).status is Status.CANCELLED
    svc2, store2 = service(2, decline_threshold=100.0)
    with pytest.raises(BookingError):
        svc2.saga("u", Itinerary(("f",)), "k")
    assert store2.available("f") == 2


def test_multi_slot_all_or_nothing():
    svc, store = service(1)
    svc.saga("u1", Itinerary(("h",), 1), "hotel")
    with pytest.raises(BookingError):
        svc.reserve("u2", Itinerary(("f", "h"), 1), "both")
    assert store.available("f") == 1


def test_hold_expiry():
    clock = Clock()
    svc, store = service(1, clock=clock, hold_ttl_ms=1000)
    rec, _ = svc.reserve("u", Itinerary(("f",)), "k")
    clock.t += 2
    assert svc.get(rec.booking_id).status is Status.EXPIRED
    assert store.available("f") == 1
    with pytest.raises(BookingError) as err:
        svc.pay(rec.booking_id)
    assert err.value.status == 409


def test_confirm_requires_payment_and_publishes():
    svc, _ = service(2)
    sub = svc.bus.subscribe("booking.confirmed")
    rec, _ = svc.reserve("u", Itinerary(("f",)), "k")
    with pytest.raises(BookingError, match="payment required"):
        svc.confirm(rec.booking_id)
    svc.pay(rec.booking_id)
    assert svc.confirm(rec.booking_id).status is Status.CONFIRMED
    assert svc.confirm(rec.booking_id).status is Status.CONFIRMED
    events = sub.drain()
    assert len(events) == 1 and events[0].payload["booking_id"] == rec.booking_id


def test_invalid_and_unknown():
    svc, _ = service(1)
    with pytest.raises(BookingError) as err:
        svc.reserve("u", Itinerary(("ghost",)), "k")
    assert err.value.status == 422
    with pytest.raises(BookingError) as err:
        svc.get("bk-none")
    assert err.value.status == 404
    with pytest.raises(BookingError) as err:
        svc.reserve("u", Itinerary(("f",)), "")
    assert err.value.status == 400


def test_contention_exactly_capacity():
    svc, store = service(50)
    results = []
    lock = threading.Lock()

    def go(i):
        try:
            r = svc.saga(f"u{i}", Itinerary(("f",)), f"k{i}").status
        except BookingError as exc:
            r = exc.status
        with lock:
            results.append(r)

    threads = [threading.Thread(target=go, args=(i,)) for i in range(500)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results.count(Status.CONFIRMED) == 50
    assert results.count(409) == 450
    assert store.available("f") == 0
    assert store.check_conservation() == []
