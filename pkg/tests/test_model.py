import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resa.model import (
    Catalog,
    FitnessWeights,
    InvalidItinerary,
    Itinerary,
    Kind,
    TravelOption,
    TripRequest,
    UserProfile,
    is_valid,
    itinerary_totals,
    validate_itinerary,
)
from resa.sustainability import carbon_estimate

from instances import hotel, leg

DAY = 1440


@pytest.fixture(scope="module")
def catalog():
    return Catalog([
        leg("f1", Kind.FLIGHT, "A", "B", 100, 200, price=120.0),
        leg("t1", Kind.TRAIN, "B", "C", 300, 500, price=40.0, km=200.0),
        leg("t2", Kind.TRAIN, "C", "D", 600, 700, price=30.0, km=100.0),
        leg("r1", Kind.FLIGHT, "B", "A", 200 + 2 * DAY, 300 + 2 * DAY, price=110.0),
        hotel("hB", "B", price=80.0),
        hotel("hC", "C", price=60.0),
        TravelOption("z", Kind.BUS, "A", "B", 0, 45, 0.0, 0.0, 1),
    ])


def test_option_invariants():
    with pytest.raises(ValueError):
        leg("x", Kind.FLIGHT, "A", "B", 10, 10)
    with pytest.raises(ValueError):
        leg("x", Kind.FLIGHT, "A", "B", 10, 20, price=-1)
    with pytest.raises(ValueError):
        leg("x", Kind.TRAIN, "A", "B", 10, 20, eco=1.5)
    with pytest.raises(ValueError):
        TravelOption("h", Kind.HOTEL, "A", "B", 0, 0, 10.0, 0.0, 1)


def test_option_round_trip():
    o = leg("f", Kind.FLIGHT, "A", "B", 1, 2, eco=0.3)
    assert TravelOption.from_dict(o.to_dict()) == o
    assert o.duration == 1


def test_catalog_rejects_duplicates_and_unknown_cities():
    o = leg("f", Kind.FLIGHT, "A", "B", 1, 2)
    with pytest.raises(ValueError, match="duplicate"):
        Catalog([o, o])
    with pytest.raises(ValueError, match="outside"):
        Catalog([o], cities=["A"])


def test_catalog_indexes(catalog):
    assert catalog.get("nope") is None
    assert [o.id for o in catalog.route("A", "B")] == ["f1", "z"]
    assert [o.id for o in catalog.hotels("B")] == ["hB"]
    assert Catalog.from_dict(catalog.to_dict()).options == catalog.options


def test_weights_normalized():
    w = FitnessWeights(2, 2, 0, 0)
    assert (w.w_cost, w.w_time, w.w_pref, w.w_eco) == (0.5, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        FitnessWeights(0, 0, 0, 0)


def test_request_layout():
    r = TripRequest("A", "C", 0, 10 * DAY, nights=2, via=("B",), round_trip=True)
    assert r.layout() == [("out", "A", "B"), ("out", "B", "C"), ("hotel", "", "C"),
                          ("ret", "C", "B"), ("ret", "B", "A")]
    assert TripRequest.from_dict(r.to_dict()) == r
    with pytest.raises(ValueError):
        TripRequest("A", "A", 0, 10)
    with pytest.raises(ValueError):
        TripRequest("A", "B", 0, 10, preferred_modes={Kind.HOTEL})


def test_profile_round_trip():
    p = UserProfile("u1", frozenset({Kind.TRAIN}), eco_affinity=0.7, booking_history=(("f1", 4),))
    assert UserProfile.from_dict(p.to_dict()) == p


def test_empty_itinerary(catalog):
    assert validate_itinerary(Itinerary(()), catalog) == ["empty itinerary"]


def test_direct_flight_and_hotel_ok(catalog):
    req = TripRequest("A", "B", 0, DAY, nights=1)
    assert validate_itinerary(Itinerary(("f1", "hB"), 1), catalog, req) == []


def test_broken_chain(catalog):
    # A->B then C->D
    v = validate_itinerary(Itinerary(("f1", "t2")), catalog)
    assert v == ["broken chain at slot 1"]


def test_dangling_reference_is_a_violation(catalog):
    v = validate_itinerary(Itinerary(("f1", "ghost")), catalog)
    assert v == ["dangling reference at slot 1"]


def test_window_and_order_violations(catalog):
    req = TripRequest("A", "C", 150, 400, via=("B",))
    v = validate_itinerary(Itinerary(("f1", "t1")), catalog, req)
    assert "departs before window" in v and "arrives after window" in v
    # t1 arrives at 500; t2 leaving earlier would fail ordering
    cat = Catalog(list(catalog.options) + [leg("t3", Kind.TRAIN, "C", "D", 400, 450)])
    assert "non-increasing times at slot 1" in validate_itinerary(Itinerary(("t1", "t3")), cat)


def test_layout_violations(catalog):
    req = TripRequest("A", "B", 0, 5 * DAY, nights=2, round_trip=True)
    assert is_valid(Itinerary(("f1", "hB", "r1"), 2), catalog, req)
    v = validate_itinerary(Itinerary(("f1", "hC", "r1"), 2), catalog, req)
    assert "hotel city mismatch" in v
    v = validate_itinerary(Itinerary(("f1", "r1", "hB"), 2), catalog, req)
    assert "expected hotel at slot 1" in v and "expected transport at slot 2" in v
    v = validate_itinerary(Itinerary(("f1", "hB"), 2), catalog, req)
    assert any(s.startswith("slot count") for s in v)
    short = TripRequest("A", "B", 0, 5 * DAY, nights=3, round_trip=True)
    v = validate_itinerary(Itinerary(("f1", "hB", "r1"), 3), catalog, short)
    assert "return departs before stay ends" in v


def test_totals_zero_option(catalog):
    assert itinerary_totals(Itinerary(("z",)), catalog) == (0.0, 45, 0.0)


def test_totals_flight_plus_hotel(catalog):
    cost, minutes, _ = itinerary_totals(Itinerary(("f1", "hB"), 1), catalog)
    assert cost == 200.0 and minutes == 100


def test_totals_match_naive_loop(catalog):
    it = Itinerary(("f1", "t1", "t2"), 0)
    cost = sum(catalog[o].price for o in it.slots)
    minutes = sum(catalog[o].arrive_time - catalog[o].depart_time for o in it.slots)
    carbon = sum(carbon_estimate(catalog[o]) for o in it.slots)
    assert itinerary_totals(it, catalog) == pytest.approx((cost, minutes, carbon))


def test_totals_invalid_raises(catalog):
    with pytest.raises(InvalidItinerary) as err:
        itinerary_totals(Itinerary(("f1", "t2")), catalog)
    assert err.value.violations == ["broken chain at slot 1"]
    assert "invalid itinerary" in str(err.value)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["f1", "t1", "t2", "r1", "hB", "hC", "z", "missing"]), max_size=5))
def test_validate_never_crashes(catalog, slots):
    v = validate_itinerary(Itinerary(tuple(slots), 1), catalog, TripRequest("A", "B", 0, 3 * DAY, nights=1))
    assert isinstance(v, list) and all(isinstance(s, str) for s in v)
    if "missing" in slots:
        assert any(s.startswith("dangling reference") for s in v)
