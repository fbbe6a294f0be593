"""Carbon estimates, itinerary eco-scores and greener-swap suggestions.

Emission factors are configuration defaults, not measured data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from .model import (
    MINUTES_PER_DAY,
    Catalog,
    Itinerary,
    InvalidItinerary,
    Kind,
    TravelOption,
    TripRequest,
    validate_itinerary,
)

DEFAULT_FACTORS = {
    Kind.FLIGHT: 0.25,
    Kind.TRAIN: 0.04,
    Kind.BUS: 0.10,
    Kind.CAR_RENTAL: 0.17,
}


@dataclass(frozen=True)
class CarbonConfig:
    kg_per_km: Mapping = field(default_factory=lambda: dict(DEFAULT_FACTORS))
    hotel_kg_per_night: float = 20.0
    short_haul_km: float = 700.0

    def __post_init__(self):
        factors = {Kind(k): float(v) for k, v in self.kg_per_km.items()}
        for k in DEFAULT_FACTORS:
            factors.setdefault(k, DEFAULT_FACTORS[k])
        if any(v < 0 for v in factors.values()) or self.hotel_kg_per_night < 0:
            raise ValueError("emission factors must be >= 0")
        if self.short_haul_km <= 0:
            raise ValueError("short_haul_km must be positive")
        object.__setattr__(self, "kg_per_km", factors)

    def to_dict(self) -> dict:
        return {
            "kg_per_km": {k.value: v for k, v in self.kg_per_km.items()},
            "hotel_kg_per_night": self.hotel_kg_per_night,
            "short_haul_km": self.short_haul_km,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CarbonConfig":
        return cls(
            kg_per_km={Kind(k): v for k, v in d.get("kg_per_km", {}).items()},
            hotel_kg_per_night=float(d.get("hotel_kg_per_night", 20.0)),
            short_haul_km=float(d.get("short_haul_km", 700.0)),
        )


def carbon_estimate(option: TravelOption, config: CarbonConfig | None = None, nights: int = 0) -> float:
    """kg CO2 for one booking of ``option``."""
    cfg = config or CarbonConfig()
    if option.kind is Kind.HOTEL:
        return nights * cfg.hotel_kg_per_night * (1.0 - 0.5 * option.eco_rating)
    return option.distance_km * cfg.kg_per_km[option.kind]


def itinerary_carbon(itinerary: Itinerary, catalog: Catalog, config: CarbonConfig | None = None) -> float:
    cfg = config or CarbonConfig()
    return sum(carbon_estimate(catalog[oid], cfg, itinerary.nights) for oid in itinerary.slots)


def eco_score(itinerary: Itinerary, catalog: Catalog, config: CarbonConfig | None,
              bounds: tuple[float, float]) -> float:
    """1 minus the min-max normalized itinerary carbon; a degenerate range scores 1."""
    violations = validate_itinerary(itinerary, catalog)
    if violations:
        raise InvalidItinerary(violations)
    lo, hi = bounds
    total = itinerary_carbon(itinerary, catalog, config)
    if hi - lo == 0:
        return 1.0
    return 1.0 - (total - lo) / (hi - lo)


class Alternative(NamedTuple):
    slot: int
    option_id: str
    saving_kg: float

    def to_dict(self) -> dict:
        return {"slot": self.slot, "option_id": self.option_id, "saving_kg": self.saving_kg}


def greener_alternatives(itinerary: Itinerary, catalog: Catalog, config: CarbonConfig | None = None,
                         request: TripRequest | None = None) -> list[Alternative]:
    """Single-slot swaps that strictly lower total carbon.

    Short-haul flights may be swapped for a train on the same route that
    still fits between the neighbouring legs (and the request window, when
    given). The hotel may be swapped for a same-city hotel with a higher eco
    rating. Sorted by saving, largest first.
    """
    cfg = config or CarbonConfig()
    violations = validate_itinerary(itinerary, catalog)
    if violations:
        raise InvalidItinerary(violations)
    opts = [catalog[oid] for oid in itinerary.slots]
    legs = [i for i, o in enumerate(opts) if o.kind.is_transport]
    out: list[Alternative] = []
    for pos, i in enumerate(legs):
        o = opts[i]
        if o.kind is not Kind.FLIGHT or o.distance_km > cfg.short_haul_km:
            continue
        lo = opts[legs[pos - 1]].arrive_time + 1 if pos > 0 else None
        hi = opts[legs[pos + 1]].depart_time - 1 if pos + 1 < len(legs) else None
        if request is not None:
            lo = max(lo, request.earliest_departure) if lo is not None else request.earliest_departure
            hi = min(hi, request.latest_arrival) if hi is not None else request.latest_arrival
            # keep the stay intact when this is the first return leg
            layout = request.layout()
            if len(layout) == len(opts) and layout[i][0] == "ret":
                outs = [opts[k] for k, s in enumerate(layout) if s[0] == "out"]
                lo = max(lo, outs[-1].arrive_time + request.nights * MINUTES_PER_DAY)
        base = carbon_estimate(o, cfg, itinerary.nights)
        for t in catalog.lookup(Kind.TRAIN, o.origin, o.destination):
            if lo is not None and t.depart_time < lo:
                continue
            if hi is not None and t.arrive_time > hi:
                continue
            saving = base - carbon_estimate(t, cfg, itinerary.nights)
            if saving > 0:
                out.append(Alternative(i, t.id, saving))
    for i, o in enumerate(opts):
        if o.kind is not Kind.HOTEL:
            continue
        base = carbon_estimate(o, cfg, itinerary.nights)
        for h in catalog.hotels(o.destination):
            if h.eco_rating <= o.eco_rating or h.capacity < itinerary.nights:
                continue
            saving = base - carbon_estimate(h, cfg, itinerary.nights)
            if saving > 0:
                out.append(Alternative(i, h.id, saving))
    out.sort(key=lambda a: (-a.saving_kg, a.slot, a.option_id))
    return out
