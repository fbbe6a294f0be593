"""Known-behaviour servers and processes used to check the harness itself.

* ``fixed``: every request answers 200 after ``latency_ms``.
* ``cliff``: like ``fixed`` while at most ``capacity`` requests are in
  flight; beyond that it answers 503 at once (a hard admission limit).
* ``null``: a bare asyncio protocol that answers every request immediately
  with a constant body, the cheapest server we can write in Python. Used to
  measure how fast the load generator itself can go.
* ``busy``: not a server; a process spinning on the CPU.

Each runs in its own child process and is stopped with :meth:`Stub.stop`.
"""

from __future__ import annotations

import asyncio
import os
import signal
import time
from dataclasses import dataclass

KINDS = ("fixed", "cliff", "null", "busy")
_NULL_RESPONSE = (b"HTTP/1.1 200 OK\r\nContent-Type: application/json\r\n"
                  b"Content-Length: 2\r\nConnection: keep-alive\r\n\r\n{}")


class _NullProtocol(asyncio.Protocol):
    """Minimal HTTP/1.1 keep-alive responder; understands Content-Length bodies only."""

    def connection_made(self, transport):
        self.transport = transport
        self.buf = b""

    def data_received(self, data):
        self.buf += data
        while True:
            end = self.buf.find(b"\r\n\r\n")
            if end < 0:
                return
            head = self.buf[:end].lower()
            n = 0
            i = head.find(b"content-length:")
            if i >= 0:
                j = head.find(b"\r\n", i)
                n = int(head[i + 15: j if j >= 0 else None])
            if len(self.buf) < end + 4 + n:
                return
            self.buf = self.buf[end + 4 + n:]
            self.transport.write(_NULL_RESPONSE)


async def _serve_null(host: str, port: int, ready, stop: asyncio.Event):
    loop = asyncio.get_running_loop()
    server = await loop.create_server(_NullProtocol, host, port, backlog=4096, reuse_address=True)
    ready(server.sockets[0].getsockname()[1])
    await stop.wait()
    server.close()


async def _serve_aiohttp(kind: str, host: str, port: int, latency_ms: float, capacity: int, ready,
                         stop: asyncio.Event):
    from aiohttp import web

    in_flight = 0

    async def handle(request):
        nonlocal in_flight
        await request.read()
        if request.path == "/health":
            return web.json_response({"status": "ok"})
        if kind == "cliff" and in_flight >= capacity:
            return web.json_response({"error": "overloaded"}, status=503)
        in_flight += 1
        try:
            await asyncio.sleep(latency_ms / 1000.0)
        finally:
            in_flight -= 1
        return web.json_response({})

    app = web.Application()
    app.router.add_route("*", "/{tail:.*}", handle)
    runner = web.AppRunner(app, access_log=None)
    await runner.setup()
    site = web.TCPSite(runner, host, port, backlog=4096, reuse_address=True)
    await site.start()
    ready(runner.addresses[0][1])
    await stop.wait()
    await runner.cleanup()


def _stub_child(kind: str, host: str, port: int, latency_ms: float, capacity: int, conn) -> None:
    def ready(bound):
        conn.send(("ready", bound, os.getpid()))
        conn.close()

    if kind == "busy":
        ready(0)
        signal.signal(signal.SIGTERM, lambda *_: os._exit(0))
        x = 0
        while True:
            x = (x * 31 + 7) % 1000003

    async def main():
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        loop.add_signal_handler(signal.SIGTERM, stop.set)
        if kind == "null":
            await _serve_null(host, port, ready, stop)
        else:
            await _serve_aiohttp(kind, host, port, latency_ms, capacity, ready, stop)

    asyncio.run(main())


@dataclass
class Stub:
    kind: str
    url: str
    pid: int
    process: object

    def stop(self) -> None:
        if self.process.is_alive():
            os.kill(self.pid, signal.SIGTERM)
        self.process.join(5.0)
        if self.process.is_alive():
            self.process.kill()
            self.process.join(1.0)

    def __enter__(self) -> "Stub":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def start_stub(kind: str, latency_ms: float = 10.0, capacity: int = 100, host: str = "127.0.0.1",
               port: int = 0, timeout: float = 30.0) -> Stub:
    if kind not in KINDS:
        raise ValueError(f"unknown stub kind {kind!r}")
    from ..services.deploy import _context

    ctx = _context()
    parent, child = ctx.Pipe(duplex=False)
    p = ctx.Process(target=_stub_child, name=f"resa-stub-{kind}", daemon=True,
                    args=(kind, host, port, latency_ms, capacity, child))
    p.start()
    child.close()
    if not parent.poll(timeout):
        p.kill()
        raise RuntimeError(f"{kind} stub did not start")
    msg = parent.recv()
    url = f"http://{host}:{msg[1]}" if kind != "busy" else ""
    stub = Stub(kind, url, msg[2], p)
    if kind == "busy":
        time.sleep(0.05)
    return stub
