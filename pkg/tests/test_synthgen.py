import json

import pytest

from resa.model import Kind, TravelOption, UserProfile
from resa.synthgen import (
    DegenerateScenario,
    ScenarioParams,
    gen_catalog,
    gen_history,
    gen_request_log,
    gen_users,
    generate,
    law_price,
    load_scenario,
    save_scenario,
)


def test_degenerate_scenario():
    with pytest.raises(DegenerateScenario, match="degenerate scenario"):
        ScenarioParams(n_cities=1)


def test_catalog_deterministic():
    p = ScenarioParams(seed=11)
    a = json.dumps(gen_catalog(p).to_dict(), sort_keys=True)
    b = json.dumps(gen_catalog(ScenarioParams(seed=11)).to_dict(), sort_keys=True)
    assert a == b
    assert a != json.dumps(gen_catalog(ScenarioParams(seed=12)).to_dict(), sort_keys=True)


def test_two_city_counts():
    cat = gen_catalog(ScenarioParams(n_cities=2, options_per_route=1, hotels_per_city=1))
    transport = [o for o in cat.options if o.kind.is_transport]
    hotels = [o for o in cat.options if o.kind is Kind.HOTEL]
    assert len(transport) == 2 and len(hotels) == 2
    assert {(o.origin, o.destination) for o in transport} == {("C00", "C01"), ("C01", "C00")}


def test_every_route_covered():
    p = ScenarioParams(n_cities=4, options_per_route=3)
    cat = gen_catalog(p)
    for a in cat.cities:
        assert cat.hotels(a)
        for b in cat.cities:
            if a != b:
                assert len(cat.route(a, b)) == 3


@pytest.mark.parametrize("seed", range(100))
def test_generated_options_satisfy_invariants(seed):
    p = ScenarioParams(seed=seed, n_cities=3, n_users=5, n_history_days=5)
    sc = generate(p)
    for o in sc.catalog.options:
        assert TravelOption.from_dict(o.to_dict()) == o
    ids = {o.id for o in sc.catalog.options}
    for u in sc.users:
        assert UserProfile.from_dict(u.to_dict()) == u
        for oid, r in u.booking_history:
            assert oid in ids and 1 <= r <= 5
    assert all(o.observed_price > 0 for o in sc.observations)


def test_users():
    assert gen_users(ScenarioParams(n_users=0)) == []
    users = gen_users(ScenarioParams(seed=2, n_users=10_000))
    assert all(0.0 <= u.eco_affinity <= 1.0 for u in users)
    assert gen_users(ScenarioParams(seed=2, n_users=50)) == users[:50]


def test_zero_noise_history_follows_law():
    p = ScenarioParams(seed=4, noise_sigma=0.0, n_users=3, n_history_days=30)
    cat = gen_catalog(p)
    obs, _ = gen_history(p, cat, gen_users(p))
    for o in obs:
        assert o.observed_price == law_price(p, o.kind, o.distance_km, o.days_before_departure, o.day_of_year)
        assert o.is_peak == (1 if o.day_of_year in p.peak_days else 0)


def test_history_deterministic():
    p = ScenarioParams(seed=5, n_users=8, n_history_days=20)
    cat = gen_catalog(p)
    assert gen_history(p, cat, gen_users(p)) == gen_history(p, cat, gen_users(p))


def test_ratings_follow_preference_match():
    from resa.recommend import content_score, price_bands

    sc = generate(ScenarioParams(seed=6, n_users=200, n_history_days=1))
    bands = price_bands(sc.catalog)
    hi, lo = [], []
    for u in sc.users:
        for oid, r in u.booking_history:
            (hi if content_score(u, sc.catalog[oid], bands) > 0.6 else lo).append(r)
    assert sum(hi) / len(hi) > sum(lo) / len(lo) + 0.5


def test_request_log_noiseless_shape():
    log = gen_request_log(1, 14, noise=0.0, seasonal_amplitude=0.0)
    weekly = (1.0, 0.9, 0.9, 0.95, 1.1, 1.25, 1.2)
    assert log == pytest.approx([1000.0 * weekly[d % 7] for d in range(14)])


def test_bundle_round_trip(tmp_path):
    sc = generate(ScenarioParams(seed=8, n_cities=3, n_users=4, n_history_days=10))
    save_scenario(sc, tmp_path)
    back = load_scenario(tmp_path)
    assert back.catalog.options == sc.catalog.options
    assert back.users == sc.users
    assert back.observations == sc.observations
    assert back.params == sc.params
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["coefficients"]["distance_km"] == sc.params.per_km
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing")
