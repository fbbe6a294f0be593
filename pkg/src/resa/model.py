"""Domain types shared across the package and itinerary rules.

Times are integer minutes since a per-scenario epoch. All types are frozen
and safe to share between threads. Every type has a ``to_dict`` /
``from_dict`` pair producing the canonical JSON shape (snake_case fields).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

MINUTES_PER_DAY = 1440


class Kind(str, enum.Enum):
    FLIGHT = "Flight"
    TRAIN = "Train"
    BUS = "Bus"
    CAR_RENTAL = "CarRental"
    HOTEL = "Hotel"

    @property
    def is_transport(self) -> bool:
        return self is not Kind.HOTEL


TRANSPORT_KINDS = (Kind.FLIGHT, Kind.TRAIN, Kind.BUS, Kind.CAR_RENTAL)


class BudgetBand(str, enum.Enum):
    LOW = "Low"
    MID = "Mid"
    HIGH = "High"


class InvalidItinerary(ValueError):
    """Raised when an itinerary fails validation; carries the violations."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid itinerary: " + "; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class TravelOption:
    id: str
    kind: Kind
    origin: str
    destination: str
    depart_time: int
    arrive_time: int
    price: float
    distance_km: float
    capacity: int
    eco_rating: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind.is_transport and self.arrive_time <= self.depart_time:
            raise ValueError(f"{self.id}: arrive_time must exceed depart_time")
        if self.price < 0 or not math.isfinite(self.price):
            raise ValueError(f"{self.id}: price must be finite and >= 0")
        if self.distance_km < 0:
            raise ValueError(f"{self.id}: distance_km must be >= 0")
        if self.capacity < 0:
            raise ValueError(f"{self.id}: capacity must be >= 0")
        if not 0.0 <= self.eco_rating <= 1.0:
            raise ValueError(f"{self.id}: eco_rating must lie in [0, 1]")
        if self.kind is Kind.HOTEL and (self.origin or self.distance_km):
            raise ValueError(f"{self.id}: hotels have no origin and zero distance")

    @property
    def duration(self) -> int:
        return self.arrive_time - self.depart_time

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "origin": self.origin,
            "destination": self.destination,
            "depart_time": self.depart_time,
            "arrive_time": self.arrive_time,
            "price": self.price,
            "distance_km": self.distance_km,
            "capacity": self.capacity,
            "eco_rating": self.eco_rating,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TravelOption":
        return cls(
            id=d["id"],
            kind=Kind(d["kind"]),
            origin=d.get("origin", ""),
            destination=d["destination"],
            depart_time=int(d["depart_time"]),
            arrive_time=int(d["arrive_time"]),
            price=float(d["price"]),
            distance_km=float(d.get("distance_km", 0.0)),
            capacity=int(d.get("capacity", 0)),
            eco_rating=float(d.get("eco_rating", 0.0)),
        )


class Catalog:
    """Immutable collection of options indexed by id and by route."""

    def __init__(self, options: Iterable[TravelOption], cities: Iterable[str] | None = None):
        opts = tuple(options)
        by_id: dict[str, TravelOption] = {}
        for o in opts:
            if o.id in by_id:
                raise ValueError(f"duplicate option id {o.id!r}")
            by_id[o.id] = o
        if cities is None:
            found = set()
            for o in opts:
                found.add(o.destination)
                if o.origin:
                    found.add(o.origin)
            cities = found
        self.cities = frozenset(cities)
        for o in opts:
            if o.destination not in self.cities or (o.origin and o.origin not in self.cities):
                raise ValueError(f"{o.id}: references a city outside the catalog")
        self.options = opts
        self._by_id = by_id
        index: dict[tuple[Kind, str, str], list[TravelOption]] = {}
        for o in opts:
            index.setdefault((o.kind, o.origin, o.destination), []).append(o)
        self._index = {k: tuple(sorted(v, key=lambda o: o.id)) for k, v in index.items()}

    def __len__(self) -> int:
        return len(self.options)

    def __contains__(self, option_id: str) -> bool:
        return option_id in self._by_id

    def get(self, option_id: str) -> TravelOption | None:
        return self._by_id.get(option_id)

    def __getitem__(self, option_id: str) -> TravelOption:
        return self._by_id[option_id]

    def lookup(self, kind: Kind, origin: str, destination: str) -> tuple[TravelOption, ...]:
        return self._index.get((Kind(kind), origin, destination), ())

    def route(self, origin: str, destination: str) -> list[TravelOption]:
        """All transport options on a route, sorted by id."""
        out = []
        for k in TRANSPORT_KINDS:
            out.extend(self.lookup(k, origin, destination))
        return sorted(out, key=lambda o: o.id)

    def hotels(self, city: str) -> tuple[TravelOption, ...]:
        return self.lookup(Kind.HOTEL, "", city)

    def to_dict(self) -> dict:
        return {
            "cities": sorted(self.cities),
            "options": [o.to_dict() for o in self.options],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Catalog":
        return cls((TravelOption.from_dict(o) for o in d["options"]), d.get("cities"))


@dataclass(frozen=True)
class FitnessWeights:
    """Objective weights, normalized to sum to one at construction."""

    w_cost: float = 0.25
    w_time: float = 0.25
    w_pref: float = 0.25
    w_eco: float = 0.25

    def __post_init__(self):
        ws = (self.w_cost, self.w_time, self.w_pref, self.w_eco)
        if any(w < 0 or not math.isfinite(w) for w in ws):
            raise ValueError("fitness weights must be finite and >= 0")
        total = sum(ws)
        if total <= 0:
            raise ValueError("at least one fitness weight must be positive")
        for name, w in zip(("w_cost", "w_time", "w_pref", "w_eco"), ws):
            object.__setattr__(self, name, w / total)

    def to_dict(self) -> dict:
        return {"w_cost": self.w_cost, "w_time": self.w_time,
                "w_pref": self.w_pref, "w_eco": self.w_eco}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitnessWeights":
        return cls(**{k: float(d[k]) for k in ("w_cost", "w_time", "w_pref", "w_eco") if k in d})


@dataclass(frozen=True)
class TripRequest:
    """A trip query.

    The slot layout is fixed by the request: outbound legs along
    ``origin -> *via -> destination``, then a hotel slot when ``nights > 0``,
    then the reversed path when ``round_trip`` is set.
    """

    origin: str
    destination: str
    earliest_departure: int
    latest_arrival: int
    nights: int = 0
    budget: float = 1e9
    preferred_modes: frozenset = frozenset()
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    via: tuple = ()
    round_trip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "preferred_modes", frozenset(Kind(k) for k in self.preferred_modes))
        object.__setattr__(self, "via", tuple(self.via))
        if self.origin == self.destination:
            raise ValueError("origin and destination must differ")
        if self.latest_arrival <= self.earliest_departure:
            raise ValueError("latest_arrival must exceed earliest_departure")
        if self.nights < 0:
            raise ValueError("nights must be >= 0")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if any(not k.is_transport for k in self.preferred_modes):
            raise ValueError("preferred_modes may only name transport kinds")

    @property
    def outbound_path(self) -> tuple[str, ...]:
        return (self.origin, *self.via, self.destination)

    def layout(self) -> list[tuple[str, str, str]]:
        """Per-slot ``(role, from_city, to_city)``; role is 'out', 'hotel' or 'ret'."""
        path = self.outbound_path
        slots = [("out", a, b) for a, b in zip(path, path[1:])]
        if self.nights > 0:
            slots.append(("hotel", "", self.destination))
        if self.round_trip:
            back = path[::-1]
            slots.extend(("ret", a, b) for a, b in zip(back, back[1:]))
        return slots

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "destination": self.destination,
            "earliest_departure": self.earliest_departure,
            "latest_arrival": self.latest_arrival,
            "nights": self.nights,
            "budget": self.budget,
            "preferred_modes": sorted(k.value for k in self.preferred_modes),
            "weights": self.weights.to_dict(),
            "via": list(self.via),
            "round_trip": self.round_trip,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TripRequest":
        return cls(
            origin=d["origin"],
            destination=d["destination"],
            earliest_departure=int(d["earliest_departure"]),
            latest_arrival=int(d["latest_arrival"]),
            nights=int(d.get("nights", 0)),
            budget=float(d.get("budget", 1e9)),
            preferred_modes=frozenset(Kind(k) for k in d.get("preferred_modes", ())),
            weights=FitnessWeights.from_dict(d["weights"]) if "weights" in d else FitnessWeights(),
            via=tuple(d.get("via", ())),
            round_trip=bool(d.get("round_trip", False)),
        )


@dataclass(frozen=True)
class Itinerary:
    slots: tuple
    nights: int = 0

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))

    def to_dict(self) -> dict:
        return {"slots": list(self.slots), "nights": self.nights}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Itinerary":
        return cls(tuple(d["slots"]), int(d.get("nights", 0)))


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    preferred_modes: frozenset = frozenset()
    budget_band: BudgetBand = BudgetBand.MID
    eco_affinity: float = 0.5
    booking_history: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "preferred_modes", frozenset(Kind(k) for k in self.preferred_modes))
        object.__setattr__(self, "budget_band", BudgetBand(self.budget_band))
        object.__setattr__(self, "booking_history",
                           tuple((str(i), int(r)) for i, r in self.booking_history))
        if not 0.0 <= self.eco_affinity <= 1.0:
            raise ValueError("eco_affinity must lie in [0, 1]")
        for _, r in self.booking_history:
            if not 1 <= r <= 5:
                raise ValueError("ratings must lie in [1, 5]")

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "preferred_modes": sorted(k.value for k in self.preferred_modes),
            "budget_band": self.budget_band.value,
            "eco_affinity": self.eco_affinity,
            "booking_history": [[i, r] for i, r in self.booking_history],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UserProfile":
        return cls(
            user_id=d["user_id"],
            preferred_modes=frozenset(Kind(k) for k in d.get("preferred_modes", ())),
            budget_band=BudgetBand(d.get("budget_band", "Mid")),
            eco_affinity=float(d.get("eco_affinity", 0.5)),
            booking_history=tuple((i, int(r)) for i, r in d.get("booking_history", ())),
        )


def validate_itinerary(itinerary: Itinerary, catalog: Catalog,
                       request: TripRequest | None = None) -> list[str]:
    """Return the list of violated rules; an empty list means the itinerary is valid.

    Without a request only structural rules are checked (references, chaining
    and time ordering of transport legs).
    """
    if len(catalog) == 0:
        raise ValueError("catalog is empty")
    if not itinerary.slots:
        return ["empty itinerary"]
    violations: list[str] = []
    opts: list[TravelOption | None] = []
    for i, oid in enumerate(itinerary.slots):
        o = catalog.get(oid)
        if o is None:
            violations.append(f"dangling reference at slot {i}")
        opts.append(o)

    layout = request.layout() if request is not None else None
    if layout is not None and len(layout) != len(opts):
        violations.append(f"slot count {len(opts)} does not match layout of {len(layout)}")
        layout = None

    # hotel placement
    hotel_city = None
    for i, o in enumerate(opts):
        if o is None:
            continue
        if layout is not None:
            role = layout[i][0]
            if role == "hotel" and o.kind is not Kind.HOTEL:
                violations.append(f"expected hotel at slot {i}")
            elif role != "hotel" and o.kind is Kind.HOTEL:
                violations.append(f"expected transport at slot {i}")
        if o.kind is Kind.HOTEL:
            if hotel_city is not None:
                violations.append(f"second hotel at slot {i}")
            hotel_city = o.destination
            if itinerary.nights > o.capacity:
                violations.append(f"hotel capacity below nights at slot {i}")

    legs = [(i, o) for i, o in enumerate(opts) if o is not None and o.kind.is_transport]
    for (i, a), (j, b) in zip(legs, legs[1:]):
        if None in opts[i:j + 1]:
            continue
        if a.destination != b.origin:
            violations.append(f"broken chain at slot {j}")
        if b.depart_time <= a.arrive_time:
            violations.append(f"non-increasing times at slot {j}")

    if request is not None and legs and None not in opts:
        first, last = legs[0][1], legs[-1][1]
        if first.origin != request.origin:
            violations.append("origin mismatch")
        if first.depart_time < request.earliest_departure:
            violations.append("departs before window")
        if last.arrive_time > request.latest_arrival:
            violations.append("arrives after window")
        if itinerary.nights != request.nights:
            violations.append("nights mismatch")
        if layout is not None:
            out_legs = [o for (role, _, _), o in zip(layout, opts) if role == "out"]
            ret_legs = [o for (role, _, _), o in zip(layout, opts) if role == "ret"]
            if out_legs and out_legs[-1].destination != request.destination:
                violations.append("destination mismatch")
            if hotel_city is not None and hotel_city != request.destination:
                violations.append("hotel city mismatch")
            if ret_legs:
                if ret_legs[-1].destination != request.origin:
                    violations.append("return does not reach origin")
                stay_end = out_legs[-1].arrive_time + request.nights * MINUTES_PER_DAY
                if ret_legs[0].depart_time < stay_end:
                    violations.append("return departs before stay ends")
    return violations


def is_valid(itinerary: Itinerary, catalog: Catalog, request: TripRequest | None = None) -> bool:
    return not validate_itinerary(itinerary, catalog, request)


def itinerary_totals(itinerary: Itinerary, catalog: Catalog, carbon_config=None) -> tuple[float, int, float]:
    """(total_cost, total_time_minutes, total_carbon_kg) of a valid itinerary."""
    from .sustainability import CarbonConfig, carbon_estimate

    violations = validate_itinerary(itinerary, catalog)
    if violations:
        raise InvalidItinerary(violations)
    cfg = carbon_config or CarbonConfig()
    cost = 0.0
    minutes = 0
    carbon = 0.0
    for oid in itinerary.slots:
        o = catalog[oid]
        cost += o.price
        if o.kind.is_transport:
            minutes += o.duration
        carbon += carbon_estimate(o, cfg, itinerary.nights)
    return cost, minutes, carbon
