import threading

import pytest

from resa.rng import Stream
from resa.services.bus import EventBus, PublishTimeout
from resa.services.inventory import HoldExpired, InventoryStore, SoldOut, UnknownHold


class Clock:
    def __init__(self):
        self.t = 1000.0

    def __call__(self):
        return self.t


def test_hold_release_restores():
    s = InventoryStore({"a": 5, "b": 2})
    h = s.hold([("a", 3), ("b", 1)], 10_000)
    assert s.available("a") == 2 and s.available("b") == 1
    s.release(h.hold_id)
    assert s.available("a") == 5 and s.available("b") == 2
    assert s.check_conservation() == []


def test_all_or_nothing():
    s = InventoryStore({"a": 5, "b": 1})
    s.hold([("b", 1)], 10_000)
    with pytest.raises(SoldOut) as err:
        s.hold([("a", 1), ("b", 1)], 10_000)
    assert err.value.option_id == "b"
    assert s.available("a") == 5


def test_capacity_then_one_more():
    s = InventoryStore({"a": 4})
    s.hold([("a", 4)], 10_000)
    with pytest.raises(SoldOut):
        s.hold([("a", 1)], 10_000)


def test_commit_and_expiry():
    clock = Clock()
    s = InventoryStore({"a": 3}, clock=clock)
    h = s.hold([("a", 2)], 5_000)
    assert s.commit(h.hold_id).state == "committed"
    assert s.commit(h.hold_id).state == "committed"
    assert s.snapshot("a") == {"option_id": "a", "capacity": 3, "committed": 2, "held": 0, "available": 1}
    h2 = s.hold([("a", 1)], 5_000)
    clock.t += 6
    assert s.available("a") == 1
    with pytest.raises(HoldExpired):
        s.commit(h2.hold_id)
    with pytest.raises(UnknownHold):
        s.release("hold-404")
    with pytest.raises(KeyError):
        s.available("zzz")


@pytest.mark.parametrize("sharded", [True, False])
def test_concurrent_storm_conserves(sharded):
    caps = {f"o{i}": 7 for i in range(6)}
    s = InventoryStore(caps, sharded=sharded)

    def worker(k):
        rng = Stream(k)
        mine = []
        for _ in range(300):
            if mine and rng.random() < 0.4:
                h = mine.pop(rng.randint(len(mine)))
                (s.commit if rng.random() < 0.3 else s.release)(h.hold_id)
                continue
            items = [(f"o{rng.randint(6)}", 1 + rng.randint(2)) for _ in range(1 + rng.randint(3))]
            try:
                mine.append(s.hold(items, 60_000))
            except SoldOut:
                pass
        for h in mine:
            s.release(h.hold_id)

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert s.check_conservation() == []
    for k in caps:
        snap = s.snapshot(k)
        assert snap["held"] == 0 and snap["available"] == 7 - snap["committed"] >= 0


def test_bus_sequence_and_fanout():
    bus = EventBus()
    a, b = bus.subscribe("t"), bus.subscribe("t")
    for i in range(3):
        bus.publish("t", {"i": i})
    assert [e.seq for e in a.drain()] == [1, 2, 3]
    assert [e.payload["i"] for e in b.drain()] == [0, 1, 2]
    assert bus.stats()["t"] == {"seq": 3, "subscribers": 2}


def test_bus_backpressure_timeout():
    bus = EventBus(depth=2)
    sub = bus.subscribe("t")
    bus.publish("t", 1)
    bus.publish("t", 2)
    with pytest.raises(PublishTimeout):
        bus.publish("t", 3, timeout=0.05)
    assert sub.get(timeout=1).payload == 1
    bus.publish("t", 3, timeout=0.05)
    bus.unsubscribe(sub)
    bus.publish("t", 4)


def test_bus_concurrent_per_publisher_order():
    bus = EventBus(depth=64)
    sub = bus.subscribe("t")
    got = []

    def consume():
        for ev in sub:
            got.append(ev)
            if len(got) == 10_000:
                return

    c = threading.Thread(target=consume)
    c.start()

    def publish(p):
        for i in range(2500):
            bus.publish("t", (p, i))

    pubs = [threading.Thread(target=publish, args=(p,)) for p in range(4)]
    for t in pubs:
        t.start()
    for t in pubs:
        t.join()
    c.join(30)
    assert len(got) == 10_000
    assert [e.seq for e in got] == list(range(1, 10_001))
    for p in range(4):
        assert [i for q, i in (e.payload for e in got) if q == p] == list(range(2500))
