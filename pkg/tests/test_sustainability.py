import pytest

from resa.model import Catalog, InvalidItinerary, Itinerary, Kind, TripRequest
from resa.optimizer import build_slot_candidates, slot_tables
from resa.sustainability import (
    CarbonConfig,
    carbon_estimate,
    eco_score,
    greener_alternatives,
    itinerary_carbon,
)

from instances import hotel, leg

DAY = 1440


def test_carbon_examples():
    assert carbon_estimate(leg("x", Kind.FLIGHT, "A", "B", 0, 1, km=0.0)) == 0.0
    assert carbon_estimate(leg("t", Kind.TRAIN, "A", "B", 0, 1, km=500.0)) == pytest.approx(20.0)
    assert carbon_estimate(hotel("h", "B", eco=1.0), nights=2) == pytest.approx(20.0)
    assert carbon_estimate(hotel("h", "B", eco=0.0), nights=2) == pytest.approx(40.0)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        CarbonConfig(kg_per_km={Kind.BUS: -1})
    cfg = CarbonConfig(kg_per_km={"Train": 0.05}, hotel_kg_per_night=10.0)
    assert cfg.kg_per_km[Kind.TRAIN] == 0.05 and cfg.kg_per_km[Kind.FLIGHT] == 0.25
    assert CarbonConfig.from_dict(cfg.to_dict()) == cfg


@pytest.fixture(scope="module")
def parallel():
    cat = Catalog([
        leg("f", Kind.FLIGHT, "A", "B", 100, 160, km=500.0),
        leg("t", Kind.TRAIN, "A", "B", 100, 400, km=500.0),
        leg("late", Kind.TRAIN, "A", "B", 5000, 5300, km=500.0),
        hotel("h0", "B", eco=0.2),
        hotel("h1", "B", eco=0.8),
    ])
    return cat


def test_flight_to_train_swap(parallel):
    it = Itinerary(("f",))
    alts = greener_alternatives(it, parallel, request=TripRequest("A", "B", 0, DAY))
    assert [(a.slot, a.option_id) for a in alts] == [(0, "t")]
    assert alts[0].saving_kg == pytest.approx(105.0)


def test_no_flights_only_hotel_swaps(parallel):
    it = Itinerary(("t", "h0"), 2)
    alts = greener_alternatives(it, parallel)
    assert [a.option_id for a in alts] == ["h1"]
    assert all(parallel[a.option_id].kind is Kind.HOTEL for a in alts)


def test_every_suggestion_reduces_total(parallel):
    it = Itinerary(("f", "h0"), 2)
    base = itinerary_carbon(it, parallel)
    alts = greener_alternatives(it, parallel)
    assert {a.option_id for a in alts} == {"t", "late", "h1"}
    for a in alts:
        slots = list(it.slots)
        slots[a.slot] = a.option_id
        assert itinerary_carbon(Itinerary(tuple(slots), 2), parallel) < base


def test_long_haul_flights_not_swapped():
    cat = Catalog([leg("f", Kind.FLIGHT, "A", "B", 0, 60, km=2000.0),
                   leg("t", Kind.TRAIN, "A", "B", 0, 900, km=2000.0)])
    assert greener_alternatives(Itinerary(("f",)), cat) == []


def test_eco_score_endpoints(parallel):
    req = TripRequest("A", "B", 0, DAY, nights=2)
    tables = slot_tables(build_slot_candidates(parallel, req), req)
    bounds = tables.bounds["carbon"]
    lo_it, hi_it = Itinerary(("t", "h1"), 2), Itinerary(("f", "h0"), 2)
    assert eco_score(lo_it, parallel, None, bounds) == 1.0
    assert eco_score(hi_it, parallel, None, bounds) == 0.0
    mid = Itinerary(("t", "h0"), 2)
    want = 1 - (itinerary_carbon(mid, parallel) - bounds[0]) / (bounds[1] - bounds[0])
    assert eco_score(mid, parallel, None, bounds) == pytest.approx(want)
    assert eco_score(mid, parallel, None, (5.0, 5.0)) == 1.0
    with pytest.raises(InvalidItinerary):
        eco_score(Itinerary(("ghost",)), parallel, None, bounds)
