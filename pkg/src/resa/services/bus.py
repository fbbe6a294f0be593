"""In-process publish/subscribe bus with bounded per-subscriber queues.

Sequence numbers are assigned per topic under the topic lock, and a message
is enqueued to every subscriber before the next number is handed out, so
each subscriber sees 1, 2, 3, ... with no gaps. A full subscriber queue
blocks the publisher until space frees up or the timeout expires.
"""

from __future__ import annotations

import collections
import threading
import time
from dataclasses import dataclass, field
from typing import Any


class PublishTimeout(Exception):
    pass


@dataclass(frozen=True)
class Event:
    topic: str
    seq: int
    payload: Any
    timestamp: float

    def to_dict(self) -> dict:
        return {"topic": self.topic, "seq": self.seq, "payload": self.payload, "timestamp": self.timestamp}


class Subscription:
    def __init__(self, topic: str, depth: int):
        self.topic = topic
        self.depth = depth
        self._q: collections.deque = collections.deque()
        self._cv = threading.Condition()
        self.closed = False

    def _has_room(self) -> bool:
        return len(self._q) < self.depth

    def _put(self, ev: Event) -> None:
        with self._cv:
            self._q.append(ev)
            self._cv.notify_all()

    def get(self, timeout: float | None = None) -> Event | None:
        """Next event, or None on timeout."""
        with self._cv:
            if not self._cv.wait_for(lambda: self._q or self.closed, timeout):
                return None
            if not self._q:
                return None
            ev = self._q.popleft()
            self._cv.notify_all()
            return ev

    def drain(self) -> list[Event]:
        with self._cv:
            out = list(self._q)
            self._q.clear()
            self._cv.notify_all()
            return out

    def __iter__(self):
        while True:
            ev = self.get(timeout=0.1)
            if ev is None:
                if self.closed:
                    return
                continue
            yield ev

    def close(self) -> None:
        with self._cv:
            self.closed = True
            self._cv.notify_all()


class _Topic:
    def __init__(self):
        self.lock = threading.Lock()
        self.seq = 0
        self.subs: list[Subscription] = []


class EventBus:
    def __init__(self, depth: int = 1024, timeout_s: float = 5.0):
        self.depth = depth
        self.timeout_s = timeout_s
        self._topics: dict[str, _Topic] = {}
        self._guard = threading.Lock()
        self.published = collections.Counter()

    def _topic(self, name: str) -> _Topic:
        with self._guard:
            t = self._topics.get(name)
            if t is None:
                t = self._topics[name] = _Topic()
            return t

    def subscribe(self, topic: str, depth: int | None = None) -> Subscription:
        t = self._topic(topic)
        sub = Subscription(topic, depth or self.depth)
        with t.lock:
            t.subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        t = self._topic(sub.topic)
        with t.lock:
            if sub in t.subs:
                t.subs.remove(sub)
        sub.close()

    def publish(self, topic: str, payload: Any, timeout: float | None = None) -> Event:
        t = self._topic(topic)
        deadline = time.monotonic() + (self.timeout_s if timeout is None else timeout)
        with t.lock:
            for sub in t.subs:
                with sub._cv:
                    while not sub._has_room() and not sub.closed:
                        left = deadline - time.monotonic()
                        if left <= 0:
                            raise PublishTimeout(f"queue full on topic {topic}")
                        sub._cv.wait(left)
            t.seq += 1
            ev = Event(topic, t.seq, payload, time.time())
            for sub in t.subs:
                if not sub.closed:
                    sub._put(ev)
            self.published[topic] += 1
            return ev

    def stats(self) -> dict:
        with self._guard:
            return {name: {"seq": t.seq, "subscribers": len(t.subs)} for name, t in sorted(self._topics.items())}
