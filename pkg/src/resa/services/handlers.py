"""Endpoint logic shared verbatim by the monolith and every microservice.

A handler takes the process :class:`State` and a :class:`Request` and returns
``(status, body)``. Bodies are serialized with :func:`encode`, so identical
handler results give identical bytes in both deployment modes.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from ..forecast import ForecastBundle, classify_price_range, features, predict_price
from ..model import MINUTES_PER_DAY, Catalog, Itinerary, TripRequest, itinerary_totals
from ..optimizer import InfeasibleRequest, evolve
from ..recommend import Recommender
from ..sustainability import CarbonConfig, greener_alternatives
from .booking import BookingError, BookingService, Inventory, LocalInventory
from .bus import EventBus
from .config import ServiceConfig
from .inventory import HoldExpired, InventoryStore, LockSet, SoldOut, UnknownHold


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class Request:
    method: str
    path: str
    query: Mapping = field(default_factory=dict)
    body: bytes = b""
    headers: Mapping = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def json(self) -> dict:
        if not self.body:
            return {}
        try:
            data = json.loads(self.body)
        except ValueError:
            raise HttpError(400, "malformed JSON body") from None
        if not isinstance(data, dict):
            raise HttpError(400, "JSON body must be an object")
        return data


def encode(body) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def error_body(message: str) -> dict:
    return {"error": message}


@dataclass
class State:
    """Whatever subset of the system one process hosts."""

    config: ServiceConfig
    catalog: Catalog | None = None
    models: ForecastBundle | None = None
    recommender: Recommender | None = None
    profiles: dict | None = None
    inventory: InventoryStore | None = None
    bookings: BookingService | None = None
    peak_days: frozenset = frozenset()
    start_day: int = 1
    carbon: CarbonConfig = field(default_factory=CarbonConfig)
    notifications: dict = field(default_factory=lambda: {"booking.confirmed": 0})

    def need(self, attr: str, what: str):
        v = getattr(self, attr)
        if v is None:
            raise HttpError(503, f"{what} not loaded")
        return v


def busy_work(units: int) -> int:
    """Burn roughly ``units`` thousand loop iterations of CPU."""
    x = 0
    for i in range(int(units) * 1000):
        x += i * i
    return x


def _int_param(query: Mapping, name: str, default=None):
    raw = query.get(name)
    if raw is None or raw == "":
        if default is None:
            raise HttpError(400, f"missing parameter {name}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise HttpError(400, f"malformed {name}: {raw!r}") from None


# ---------------------------------------------------------------- handlers

def health(state: State, req: Request):
    return 200, {"status": "ok"}


def search(state: State, req: Request):
    """Options leaving ``origin`` for ``dest`` with departure in [from, to]; hotels when origin is absent."""
    catalog = state.need("catalog", "catalog")
    q = req.query
    dest = q.get("dest", "")
    origin = q.get("origin", "")
    lo = _int_param(q, "from", -1)
    hi = _int_param(q, "to", 2 ** 62)
    if not dest:
        raise HttpError(400, "missing parameter dest")
    for city in (origin, dest):
        if city and city not in catalog.cities:
            raise HttpError(422, f"unknown city {city}")
    if origin:
        found = [o for o in catalog.route(origin, dest) if lo <= o.depart_time <= hi]
    else:
        found = list(catalog.hotels(dest))
    found.sort(key=lambda o: (o.price, o.id))
    return 200, {"options": [o.to_dict() for o in found], "count": len(found)}


def quote(state: State, req: Request):
    catalog = state.need("catalog", "catalog")
    data = req.json()
    oid = data.get("option_id")
    if not isinstance(oid, str):
        raise HttpError(400, "option_id required")
    try:
        date = int(data.get("date"))
    except (TypeError, ValueError):
        raise HttpError(400, "malformed date") from None
    if not 1 <= date <= 366:
        raise HttpError(400, "date must be a day of year in 1..366")
    option = catalog.get(oid)
    if option is None:
        raise HttpError(404, f"unknown option {oid}")
    models = state.models
    kind = option.kind.value
    if models is None or kind not in models.ols or kind not in models.tree:
        raise HttpError(503, "model not loaded")
    depart_doy = (state.start_day - 1 + option.depart_time // MINUTES_PER_DAY) % 365 + 1
    before = (depart_doy - date) % 365
    fv = features(option.distance_km, before, depart_doy, 1 if depart_doy in state.peak_days else 0)
    return 200, {
        "option_id": oid,
        "date": date,
        "days_before_departure": before,
        "list_price": option.price,
        "predicted_price": round(predict_price(models.ols[kind], fv), 6),
        "price_range": classify_price_range(models.tree[kind], fv),
    }


def recommend(state: State, req: Request):
    rec = state.need("recommender", "recommender")
    data = req.json()
    uid = data.get("user_id")
    try:
        n = int(data.get("n", 10))
    except (TypeError, ValueError):
        raise HttpError(400, "malformed n") from None
    if n < 0:
        raise HttpError(400, "n must be >= 0")
    if uid not in rec.users:
        raise HttpError(404, f"unknown user {uid}")
    return 200, rec.recommend(uid, n).to_dict()


def optimize(state: State, req: Request):
    catalog = state.need("catalog", "catalog")
    data = req.json()
    try:
        request = TripRequest.from_dict(data["trip_request"])
    except (KeyError, TypeError, ValueError) as exc:
        raise HttpError(400, f"malformed trip_request: {exc}") from None
    for city in (request.origin, request.destination, *request.via):
        if city not in catalog.cities:
            raise HttpError(422, f"unknown city {city}")
    ga = state.config.ga
    if data.get("seed") is not None:
        try:
            ga = replace(ga, seed=int(data["seed"]))
        except (TypeError, ValueError):
            raise HttpError(400, "malformed seed") from None
    try:
        result = evolve(catalog, request, ga, state.carbon)
    except InfeasibleRequest as exc:
        raise HttpError(422, str(exc)) from None
    cost, minutes, carbon = itinerary_totals(result.itinerary, catalog, state.carbon)
    alts = greener_alternatives(result.itinerary, catalog, state.carbon, request)
    return 200, {
        "itinerary": result.itinerary.to_dict(),
        "fitness": result.fitness,
        "totals": {"cost": round(cost, 6), "time": minutes, "carbon_kg": round(carbon, 6)},
        "within_budget": cost <= request.budget,
        "alternatives": [a.to_dict() for a in alts],
        "trace": {
            "generations": result.trace.generations,
            "best_fitness": result.trace.best_fitness[-1],
            "initial_best_fitness": result.trace.best_fitness[0],
            "stopped_early": result.trace.stopped_early,
        },
        "seed": ga.seed,
    }


def _booking_call(fn, *args):
    try:
        return fn(*args)
    except BookingError as exc:
        raise HttpError(exc.status, exc.message) from None


def create_booking(state: State, req: Request):
    svc = state.need("bookings", "booking service")
    data = req.json()
    try:
        itinerary = Itinerary.from_dict(data["itinerary"])
        uid = str(data["user_id"])
        key = str(data["idempotency_key"])
    except (KeyError, TypeError, ValueError) as exc:
        raise HttpError(400, f"malformed booking request: {exc}") from None
    rec, created = _booking_call(svc.reserve, uid, itinerary, key)
    return (201 if created else 200), rec.to_dict()


def get_booking(state: State, req: Request):
    svc = state.need("bookings", "booking service")
    return 200, _booking_call(svc.get, req.params["id"]).to_dict()


def pay_booking(state: State, req: Request):
    svc = state.need("bookings", "booking service")
    force = req.headers.get("X-Force-Decline", "").lower() in ("1", "true", "yes")
    return 200, _booking_call(svc.pay, req.params["id"], force).to_dict()


def confirm_booking(state: State, req: Request):
    svc = state.need("bookings", "booking service")
    return 200, _booking_call(svc.confirm, req.params["id"]).to_dict()


def cancel_booking(state: State, req: Request):
    svc = state.need("bookings", "booking service")
    return 200, _booking_call(svc.cancel, req.params["id"]).to_dict()


def get_profile(state: State, req: Request):
    profiles = state.need("profiles", "profile store")
    p = profiles.get(req.params["id"])
    if p is None:
        raise HttpError(404, f"unknown user {req.params['id']}")
    return 200, p.to_dict()


def inventory_get(state: State, req: Request):
    store = state.need("inventory", "inventory")
    try:
        return 200, store.snapshot(req.params["id"])
    except KeyError:
        raise HttpError(404, f"unknown option {req.params['id']}") from None


def inventory_hold(state: State, req: Request):
    store = state.need("inventory", "inventory")
    data = req.json()
    try:
        items = [(str(o), int(u)) for o, u in data["items"]]
        ttl = int(data.get("ttl_ms", state.config.hold_ttl_ms))
    except (KeyError, TypeError, ValueError):
        raise HttpError(400, "malformed hold request") from None
    try:
        h = store.hold(items, ttl)
    except SoldOut as exc:
        return 409, {"error": str(exc), "option_id": exc.option_id}
    except KeyError as exc:
        raise HttpError(404, f"unknown option {exc.args[0]}") from None
    except ValueError as exc:
        raise HttpError(400, str(exc)) from None
    return 201, {"hold_id": h.hold_id, "expires_at_ms": int(h.expires_at * 1000)}


def inventory_commit(state: State, req: Request):
    store = state.need("inventory", "inventory")
    try:
        h = store.commit(req.params["id"])
    except UnknownHold:
        raise HttpError(404, "unknown hold") from None
    except HoldExpired as exc:
        raise HttpError(409, str(exc)) from None
    return 200, {"hold_id": h.hold_id, "state": h.state}


def inventory_release(state: State, req: Request):
    store = state.need("inventory", "inventory")
    try:
        h = store.release(req.params["id"])
    except UnknownHold:
        raise HttpError(404, "unknown hold") from None
    return 200, {"hold_id": h.hold_id, "state": h.state}


# ---------------------------------------------------------------- routing

@dataclass(frozen=True)
class Route:
    method: str
    pattern: re.Pattern
    service: str
    handler: Callable
    endpoint: str
    work: str | None = None      # key into the work model, None = no synthetic cost


def _r(method, pattern, service, handler, work=None) -> Route:
    return Route(method, re.compile("^" + pattern + "$"), service, handler, handler.__name__, work)


_ID = r"(?P<id>[A-Za-z0-9_.:-]+)"

ROUTES = (
    _r("GET", "/search", "search", search, "search"),
    _r("POST", "/quote", "quote", quote, "quote"),
    _r("POST", "/recommend", "recommend", recommend, "recommend"),
    _r("POST", "/optimize", "optimize", optimize, "optimize"),
    _r("POST", "/bookings", "booking", create_booking, "booking"),
    _r("GET", f"/bookings/{_ID}", "booking", get_booking),
    _r("POST", f"/bookings/{_ID}/pay", "booking", pay_booking),
    _r("POST", f"/bookings/{_ID}/confirm", "booking", confirm_booking),
    _r("POST", f"/bookings/{_ID}/cancel", "booking", cancel_booking),
    _r("GET", f"/profiles/{_ID}", "profile", get_profile),
    _r("POST", "/inventory/holds", "inventory", inventory_hold),
    _r("POST", f"/inventory/holds/{_ID}/commit", "inventory", inventory_commit),
    _r("POST", f"/inventory/holds/{_ID}/release", "inventory", inventory_release),
    _r("GET", f"/inventory/{_ID}", "inventory", inventory_get),
)

# first path segment -> owning service (used by the gateway)
PREFIXES = {"search": "search", "quote": "quote", "recommend": "recommend", "optimize": "optimize",
            "bookings": "booking", "profiles": "profile", "inventory": "inventory"}


def match(method: str, path: str, services=None) -> tuple[Route, dict]:
    """Find the route for ``(method, path)``, restricted to ``services`` when given."""
    path_hit = False
    for r in ROUTES:
        if services is not None and r.service not in services:
            continue
        m = r.pattern.match(path)
        if m is None:
            continue
        path_hit = True
        if r.method == method:
            return r, m.groupdict()
    if path_hit:
        raise HttpError(405, "method not allowed")
    raise HttpError(404, "not found")


def dispatch(state: State, req: Request, services=None) -> tuple[int, dict, Route | None]:
    """Run the matching handler; returns ``(status, body, route)`` and never raises HttpError."""
    route = None
    try:
        route, params = match(req.method, req.path, services)
        req.params = params
        status, body = route.handler(state, req)
    except HttpError as exc:
        return exc.status, error_body(exc.message), route
    return status, body, route


# ---------------------------------------------------------------- state building

def build_state(config: ServiceConfig, scenario=None, models: ForecastBundle | None = None,
                services=None, inventory: Inventory | None = None, sharded: bool = True) -> State:
    """Load the parts of the system that ``services`` need (all of them when None)."""
    want = set(services) if services is not None else {"search", "quote", "recommend", "optimize",
                                                       "booking", "inventory", "profile"}
    st = State(config)
    if scenario is None:
        return st
    catalog = scenario.catalog
    st.peak_days = frozenset(scenario.params.peak_days)
    st.start_day = scenario.params.start_day
    if want & {"search", "quote", "optimize", "booking", "recommend"}:
        st.catalog = catalog
    if "quote" in want:
        st.models = models
    if "recommend" in want:
        st.recommender = Recommender.build(catalog, scenario.users, k_neighbors=config.recommend_k,
                                           lam=config.recommend_lambda)
    if "profile" in want:
        st.profiles = {u.user_id: u for u in scenario.users}
    coarse = None if sharded else threading.RLock()
    if "inventory" in want:
        caps = {o.id: (config.capacity_override if config.capacity_override > 0 else o.capacity)
                for o in catalog.options}
        st.inventory = InventoryStore(caps, sharded=sharded, coarse_lock=coarse)
    if "booking" in want:
        inv = inventory if inventory is not None else LocalInventory(st.need("inventory", "inventory"))
        bus = EventBus(config.bus_depth, config.bus_timeout_s)
        st.bookings = BookingService(catalog, inv, config, bus, LockSet(sharded, coarse))
        _start_notifier(st)
    return st


def _start_notifier(st: State) -> None:
    """Background subscriber standing in for the notification service."""
    sub = st.bookings.bus.subscribe("booking.confirmed")

    def run():
        for ev in sub:
            st.notifications[ev.topic] = st.notifications.get(ev.topic, 0) + 1

    threading.Thread(target=run, name="notifier", daemon=True).start()
