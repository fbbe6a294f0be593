import math

import numpy as np
import pytest

from resa.forecast import (
    DemandInterval,
    DemandModel,
    FeatureVector,
    MapeUndefined,
    RegressionModel,
    SingularDesign,
    TreeModel,
    TreeNode,
    classify_price_range,
    demand_intervals,
    eval_accuracy,
    fit_demand,
    fit_ols,
    fit_tree,
    fit_tree_arrays,
    forecast_demand,
    group_by_kind,
    load_model,
    mape_accuracy,
    observation_features,
    predict_price,
    save_model,
    season_of,
    train_bundle,
)
from resa.synthgen import ScenarioParams, gen_request_log, generate, law_price


def fv(*xs, label=0.0):
    return FeatureVector(xs, label)


def test_ols_hand_solved():
    m = fit_ols([fv(1, 0, label=1), fv(1, 1, label=3), fv(1, 2, label=5)])
    assert m.coefficients == pytest.approx((1.0, 2.0), abs=1e-12)
    assert m.rmse == pytest.approx(0.0, abs=1e-12)


def test_ols_singular():
    data = [fv(1, 3, label=7), fv(1, 3, label=7), fv(1, 3, label=7)]
    with pytest.raises(SingularDesign, match="singular design matrix"):
        fit_ols(data)
    with pytest.raises(SingularDesign):
        fit_ols([fv(1, 2, label=1)])
    m = fit_ols(data, ridge=1e-6)
    assert predict_price(m, (1, 3)) == pytest.approx(7.0, rel=1e-4)


def test_predict_arithmetic():
    assert predict_price(RegressionModel((0.0, 0.0), 0.0), (0.0, 0.0)) == 0.0
    assert predict_price(RegressionModel((1.0, 2.0), 0.0), (1.0, 2.0)) == 5.0
    assert predict_price(RegressionModel((-5.0,), 0.0), (1.0,)) == 0.0
    assert predict_price(RegressionModel((-5.0,), 0.0, clip_at_zero=False), (1.0,)) == -5.0
    with pytest.raises(ValueError, match="dimension"):
        predict_price(RegressionModel((1.0, 2.0), 0.0), (1.0,))


def test_noiseless_recovery_and_holdout():
    p = ScenarioParams(seed=2, noise_sigma=0.0, n_users=0, n_history_days=120)
    sc = generate(p)
    groups = group_by_kind(sc.observations)
    for kind, fvs in groups.items():
        train, hold = fvs[: len(fvs) // 2], fvs[len(fvs) // 2:]
        m = fit_ols(train)
        c = p.coefficients()
        truth = [c["intercept"][kind], c["distance_km"], c["days_before_departure"], c["sin_day"],
                 c["cos_day"], c["is_peak"]]
        assert np.allclose(m.coefficients, truth, rtol=1e-6, atol=1e-9)
        for f in hold[:50]:
            assert predict_price(m, f) == pytest.approx(f.label, rel=1e-9)


def test_tree_pure_and_depth_zero():
    data = [fv(x, label=5.0) for x in range(6)]
    t = fit_tree(data, (10.0,), max_depth=3)
    assert len(t.nodes) == 1 and classify_price_range(t, (99.0,)) == 0
    mixed = [fv(x, label=20.0 if x < 4 else 5.0) for x in range(6)]
    t0 = fit_tree(mixed, (10.0,), max_depth=0)
    assert len(t0.nodes) == 1 and t0.nodes[0].label == 1


def test_tree_majority_tie_goes_low():
    data = [fv(0, label=5.0), fv(1, label=20.0)]
    assert fit_tree(data, (10.0,), max_depth=0).nodes[0].label == 0


def test_tree_one_dimensional_split():
    xs = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
    data = [fv(x, label=0.0 if x < 5 else 20.0) for x in xs]
    t = fit_tree(data, (10.0,), max_depth=1)
    root = t.nodes[0]
    assert not root.is_leaf and 4 <= root.threshold <= 5
    assert all(classify_price_range(t, f) == (0 if f.values[0] < 5 else 1) for f in data)


def test_tree_hand_built_traversal():
    # root: x0 <= 2 ? (x1 <= 1 ? 0 : 1) : 2
    nodes = (TreeNode(0, 2.0, 1, 4), TreeNode(1, 1.0, 2, 3), TreeNode(label=0), TreeNode(label=1),
             TreeNode(label=2))
    t = TreeModel(nodes, 2, (10.0, 20.0), 2)
    assert [classify_price_range(t, p) for p in [(1, 0), (2, 5), (3, 0)]] == [0, 1, 2]
    with pytest.raises(ValueError):
        classify_price_range(t, (1,))


def test_tree_regions_on_grid():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 10, size=(300, 2))
    y = ((X[:, 0] > 4).astype(int) + (X[:, 1] > 6).astype(int))
    nodes = fit_tree_arrays(X, y, 3, max_depth=4)
    t = TreeModel(tuple(nodes), 4, (1.0, 2.0), 2)

    def region_label(p):
        # walk the leaves' boxes: find the unique leaf whose box contains p
        stack = [(0, [(-math.inf, math.inf)] * 2)]
        hits = []
        while stack:
            i, box = stack.pop()
            n = nodes[i]
            if n.is_leaf:
                if all(lo < v <= hi for v, (lo, hi) in zip(p, box)):
                    hits.append(n.label)
                continue
            lo, hi = box[n.feature]
            left, right = list(box), list(box)
            left[n.feature] = (lo, min(hi, n.threshold))
            right[n.feature] = (max(lo, n.threshold), hi)
            stack += [(n.left, left), (n.right, right)]
        assert len(hits) == 1
        return hits[0]

    for gx in np.linspace(0.05, 9.95, 25):
        for gy in np.linspace(0.05, 9.95, 25):
            assert classify_price_range(t, (gx, gy)) == region_label((gx, gy))
    assert t.depth() <= 4


def test_tree_empty():
    with pytest.raises(ValueError, match="empty"):
        fit_tree([], (1.0,), 2)


def test_demand_constant_log():
    m = fit_demand([42.0] * 365)
    for iv in demand_intervals(30, start_day=100, start_dow=3):
        assert forecast_demand(m, iv) == pytest.approx(42.0)


def test_demand_alpha_zero_is_cell_mean():
    log = gen_request_log(1, 730, noise=0.0)
    m = fit_demand(log, alpha=0.0)
    ivs = demand_intervals(730)
    cells = {}
    for iv, c in zip(ivs, log):
        cells.setdefault((iv.day_of_week, season_of(iv.day_of_year, 12)), []).append(c)
    for iv in ivs[:60]:
        want = np.mean(cells[(iv.day_of_week, season_of(iv.day_of_year, 12))])
        assert forecast_demand(m, iv) == pytest.approx(want)
        assert forecast_demand(m, iv) == forecast_demand(m, iv)


def test_demand_short_log_rejected():
    with pytest.raises(ValueError):
        fit_demand([1.0] * 30)


def test_mape_examples():
    truth = [10.0, 20.0, 40.0]
    assert mape_accuracy(truth, truth) == 100.0
    assert mape_accuracy([t * 1.1 for t in truth], truth) == pytest.approx(90.0)
    with pytest.raises(MapeUndefined):
        mape_accuracy([1.0], [0.0])


def test_eval_accuracy_dispatch():
    m = RegressionModel((1.0, 2.0), 0.0)
    assert eval_accuracy(m, [fv(1, 1, label=3.0)]) == 100.0
    dm = DemandModel(tuple((5.0,) * 12 for _ in range(7)), 5.0, 0.0, 12)
    assert eval_accuracy(dm, [(DemandInterval(1, 0), 5.0)]) == 100.0
    with pytest.raises(TypeError):
        eval_accuracy(object(), [1])


def test_model_files_round_trip(tmp_path):
    sc = generate(ScenarioParams(seed=3, n_cities=3, n_users=0, n_history_days=60))
    bundle = train_bundle(sc.observations, sc.demand_log)
    assert set(bundle.ols) == {o.kind.value for o in sc.observations}
    assert bundle.demand is not None
    save_model(bundle, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.to_dict() == bundle.to_dict()
    kind = sorted(bundle.tree)[0]
    save_model(bundle.tree[kind], tmp_path / "t.json")
    assert load_model(tmp_path / "t.json") == bundle.tree[kind]


def test_bundle_two_city_uses_ridge_fallback():
    sc = generate(ScenarioParams(seed=3, n_cities=2, n_users=0, n_history_days=60, noise_sigma=0.0))
    bundle = train_bundle(sc.observations)
    o = sc.observations[0]
    want = law_price(sc.params, o.kind, o.distance_km, o.days_before_departure, o.day_of_year)
    assert predict_price(bundle.ols[o.kind.value], observation_features(o)) == pytest.approx(want, rel=1e-3)
