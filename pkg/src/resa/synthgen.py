"""Seeded scenario generation: catalogs, users, price history, demand logs.

Observed prices follow

    price = base_price[kind] + per_km * distance_km
            + per_day_before * days_before_departure
            + seasonal_amplitude * sin(2*pi*day_of_year/365)
            + peak_bump * is_peak + Normal(0, noise_sigma)

and the coefficients are written to ``meta.json`` so model recovery can be
checked. Every draw comes from :class:`resa.rng.Stream`, so a bundle is a
pure function of its parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .model import (
    MINUTES_PER_DAY,
    TRANSPORT_KINDS,
    BudgetBand,
    Catalog,
    Kind,
    TravelOption,
    UserProfile,
)
from .rng import Stream

DEFAULT_BASE_PRICE = {"Flight": 90.0, "Train": 35.0, "Bus": 25.0, "CarRental": 45.0, "Hotel": 70.0}
# km/h and fixed overhead in minutes
_SPEED = {Kind.FLIGHT: (700.0, 90), Kind.TRAIN: (120.0, 15), Kind.BUS: (70.0, 10), Kind.CAR_RENTAL: (85.0, 5)}


class DegenerateScenario(ValueError):
    pass


def _default_peak_days() -> tuple:
    # winter holidays and a mid-summer block
    return tuple(sorted(set(range(1, 6)) | set(range(355, 366)) | set(range(190, 206))))


@dataclass(frozen=True)
class ScenarioParams:
    seed: int = 7
    n_cities: int = 5
    options_per_route: int = 3
    hotels_per_city: int = 2
    n_users: int = 50
    n_history_days: int = 365
    observations_per_day: int = 8
    base_price: Mapping = field(default_factory=lambda: dict(DEFAULT_BASE_PRICE))
    per_km: float = 0.12
    per_day_before: float = -0.3
    seasonal_amplitude: float = 15.0
    peak_bump: float = 35.0
    noise_sigma: float = 4.0
    peak_days: tuple = field(default_factory=_default_peak_days)
    horizon_days: int = 14
    start_day: int = 150
    max_days_before: int = 60
    list_days_before: int = 21
    capacity_range: tuple = (20, 200)
    hotel_capacity_range: tuple = (60, 400)
    ratings_per_user: int = 8

    def __post_init__(self):
        if self.n_cities < 2:
            raise DegenerateScenario("degenerate scenario: n_cities must be >= 2")
        if self.options_per_route < 1:
            raise ValueError("options_per_route must be >= 1")
        if self.noise_sigma < 0 or self.seasonal_amplitude < 0:
            raise ValueError("noise_sigma and seasonal_amplitude must be >= 0")
        if self.n_users < 0 or self.hotels_per_city < 1:
            raise ValueError("n_users must be >= 0 and hotels_per_city >= 1")
        object.__setattr__(self, "peak_days", tuple(sorted(set(int(d) for d in self.peak_days))))
        object.__setattr__(self, "capacity_range", tuple(self.capacity_range))
        object.__setattr__(self, "hotel_capacity_range", tuple(self.hotel_capacity_range))
        bp = dict(DEFAULT_BASE_PRICE)
        bp.update({Kind(k).value: float(v) for k, v in self.base_price.items()})
        object.__setattr__(self, "base_price", bp)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["peak_days"] = list(self.peak_days)
        d["capacity_range"] = list(self.capacity_range)
        d["hotel_capacity_range"] = list(self.hotel_capacity_range)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioParams":
        return cls(**dict(d))

    def coefficients(self) -> dict:
        return {
            "intercept": dict(self.base_price),
            "distance_km": self.per_km,
            "days_before_departure": self.per_day_before,
            "sin_day": self.seasonal_amplitude,
            "cos_day": 0.0,
            "is_peak": self.peak_bump,
        }


@dataclass(frozen=True)
class PriceObservation:
    origin: str
    destination: str
    kind: Kind
    day_of_year: int
    days_before_departure: int
    is_peak: int
    distance_km: float
    observed_price: float

    def to_dict(self) -> dict:
        return {
            "route": [self.origin, self.destination],
            "kind": Kind(self.kind).value,
            "day_of_year": self.day_of_year,
            "days_before_departure": self.days_before_departure,
            "is_peak": self.is_peak,
            "distance_km": self.distance_km,
            "observed_price": self.observed_price,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriceObservation":
        return cls(d["route"][0], d["route"][1], Kind(d["kind"]), int(d["day_of_year"]),
                   int(d["days_before_departure"]), int(d["is_peak"]), float(d["distance_km"]),
                   float(d["observed_price"]))


def seasonal(day_of_year: int) -> tuple[float, float]:
    a = 2.0 * math.pi * day_of_year / 365.0
    return math.sin(a), math.cos(a)


def law_price(params: ScenarioParams, kind: Kind, distance_km: float, days_before: int,
              day_of_year: int) -> float:
    """Noise-free price from the generating law."""
    s, _ = seasonal(day_of_year)
    peak = 1 if day_of_year in params.peak_days else 0
    return (params.base_price[Kind(kind).value] + params.per_km * distance_km
            + params.per_day_before * days_before + params.seasonal_amplitude * s
            + params.peak_bump * peak)


def day_of_year_at(params: ScenarioParams, minute: int) -> int:
    return (params.start_day - 1 + minute // MINUTES_PER_DAY) % 365 + 1


def city_codes(n: int) -> list[str]:
    return [f"C{i:02d}" for i in range(n)]


def city_layout(params: ScenarioParams) -> dict[str, tuple[int, int]]:
    """Distinct cells of a square grid, chosen by a seeded shuffle."""
    side = max(3, 2 * math.ceil(math.sqrt(params.n_cities)))
    cells = [(x, y) for x in range(side) for y in range(side)]
    Stream(params.seed, 1).shuffle(cells)
    return dict(zip(city_codes(params.n_cities), cells[: params.n_cities]))


def gen_catalog(params: ScenarioParams) -> Catalog:
    rng = Stream(params.seed, 2)
    layout = city_layout(params)
    cities = sorted(layout)
    horizon = params.horizon_days * MINUTES_PER_DAY
    lo_cap, hi_cap = params.capacity_range
    options: list[TravelOption] = []
    n = 0
    for a in cities:
        for b in cities:
            if a == b:
                continue
            (xa, ya), (xb, yb) = layout[a], layout[b]
            dist = round(math.hypot(xa - xb, ya - yb) * 100.0, 3)
            for _ in range(params.options_per_route):
                kind = TRANSPORT_KINDS[rng.randint(len(TRANSPORT_KINDS))]
                speed, overhead = _SPEED[kind]
                duration = max(1, int(round(dist / speed * 60.0)) + overhead)
                depart = rng.randint(max(1, horizon - duration))
                doy = day_of_year_at(params, depart)
                price = law_price(params, kind, dist, params.list_days_before, doy)
                price += rng.normal(0.0, params.noise_sigma) if params.noise_sigma else 0.0
                options.append(TravelOption(
                    id=f"T{n:05d}", kind=kind, origin=a, destination=b,
                    depart_time=depart, arrive_time=depart + duration,
                    price=round(max(price, 1.0), 2), distance_km=dist,
                    capacity=lo_cap + rng.randint(hi_cap - lo_cap + 1), eco_rating=0.0,
                ))
                n += 1
    hlo, hhi = params.hotel_capacity_range
    for c in cities:
        for _ in range(params.hotels_per_city):
            price = params.base_price["Hotel"] * rng.uniform(0.6, 1.6)
            options.append(TravelOption(
                id=f"H{n:05d}", kind=Kind.HOTEL, origin="", destination=c,
                depart_time=0, arrive_time=horizon, price=round(price, 2), distance_km=0.0,
                capacity=hlo + rng.randint(hhi - hlo + 1), eco_rating=round(rng.random(), 2),
            ))
            n += 1
    return Catalog(options, cities)


def gen_users(params: ScenarioParams) -> list[UserProfile]:
    rng = Stream(params.seed, 3)
    bands = list(BudgetBand)
    users = []
    for i in range(params.n_users):
        modes = frozenset(k for k in TRANSPORT_KINDS if rng.random() < 0.4)
        users.append(UserProfile(
            user_id=f"U{i:04d}", preferred_modes=modes,
            budget_band=bands[rng.randint(3)], eco_affinity=round(rng.random(), 3),
        ))
    return users


def gen_history(params: ScenarioParams, catalog: Catalog, users: list[UserProfile]
                ) -> tuple[list[PriceObservation], dict[str, list[tuple[str, int]]]]:
    """Price observations plus per-user (option id, rating) histories."""
    from .recommend import content_score, price_bands

    if len(catalog) == 0:
        raise ValueError("empty catalog")
    transport = [o for o in catalog.options if o.kind.is_transport]
    if not transport:
        raise ValueError("catalog has no transport options")
    rng = Stream(params.seed, 4)
    observations = []
    for day in range(params.n_history_days):
        for _ in range(params.observations_per_day):
            o = transport[rng.randint(len(transport))]
            before = rng.randint(params.max_days_before + 1)
            doy = (params.start_day - 1 + day + before) % 365 + 1
            base = law_price(params, o.kind, o.distance_km, before, doy)
            price = base
            if params.noise_sigma:
                price = base + rng.normal(0.0, params.noise_sigma)
                while price <= 0:
                    price = base + rng.normal(0.0, params.noise_sigma)
            if price <= 0:
                raise ValueError("generating law yields a non-positive price; adjust parameters")
            observations.append(PriceObservation(
                o.origin, o.destination, o.kind, doy, before,
                1 if doy in params.peak_days else 0, o.distance_km, price,
            ))

    bands = price_bands(catalog)
    rrng = Stream(params.seed, 5)
    options = list(catalog.options)
    histories: dict[str, list[tuple[str, int]]] = {}
    for u in users:
        picked = set()
        hist = []
        for _ in range(min(params.ratings_per_user, len(options))):
            o = options[rrng.randint(len(options))]
            while o.id in picked:
                o = options[rrng.randint(len(options))]
            picked.add(o.id)
            match = content_score(u, o, bands)
            rating = int(round(1.0 + 4.0 * match + rrng.normal(0.0, 0.5)))
            hist.append((o.id, min(5, max(1, rating))))
        histories[u.user_id] = hist
    return observations, histories


def gen_request_log(seed: int, n_days: int, base: float = 1000.0, seasonal_amplitude: float = 0.3,
                    weekly: tuple = (1.0, 0.9, 0.9, 0.95, 1.1, 1.25, 1.2), noise: float = 0.05,
                    start_dow: int = 0) -> list[float]:
    """Daily request counts: base * annual sinusoid * weekday factor * (1 + noise)."""
    rng = Stream(seed, 6)
    out = []
    for d in range(n_days):
        doy = d % 365 + 1
        s, _ = seasonal(doy)
        mean = base * (1.0 + seasonal_amplitude * s) * weekly[(start_dow + d) % 7]
        out.append(max(0.0, mean * (1.0 + (rng.normal(0.0, noise) if noise else 0.0))))
    return out


@dataclass
class Scenario:
    params: ScenarioParams
    catalog: Catalog
    users: list[UserProfile]
    observations: list[PriceObservation]
    demand_log: list[float] = field(default_factory=list)

    @property
    def meta(self) -> dict:
        return {
            "seed": self.params.seed,
            "params": self.params.to_dict(),
            "coefficients": self.params.coefficients(),
            "start_day": self.params.start_day,
        }


def generate(params: ScenarioParams) -> Scenario:
    catalog = gen_catalog(params)
    users = gen_users(params)
    observations, histories = gen_history(params, catalog, users)
    users = [UserProfile(u.user_id, u.preferred_modes, u.budget_band, u.eco_affinity,
                         tuple(histories.get(u.user_id, ()))) for u in users]
    demand = gen_request_log(params.seed, 2 * 365)
    return Scenario(params, catalog, users, observations, demand)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def save_scenario(scenario: Scenario, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "catalog.json", scenario.catalog.to_dict())
    _dump(out / "users.json", [u.to_dict() for u in scenario.users])
    _dump(out / "history.json", {
        "observations": [o.to_dict() for o in scenario.observations],
        "demand_log": scenario.demand_log,
    })
    _dump(out / "meta.json", scenario.meta)
    return out


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not (p / "meta.json").exists():
        raise FileNotFoundError(f"no scenario bundle at {p}")
    meta = json.loads((p / "meta.json").read_text())
    hist = json.loads((p / "history.json").read_text())
    return Scenario(
        params=ScenarioParams.from_dict(meta["params"]),
        catalog=Catalog.from_dict(json.loads((p / "catalog.json").read_text())),
        users=[UserProfile.from_dict(u) for u in json.loads((p / "users.json").read_text())],
        observations=[PriceObservation.from_dict(o) for o in hist["observations"]],
        demand_log=list(hist.get("demand_log", [])),
    )
