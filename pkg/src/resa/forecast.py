"""Price regression, price-range decision tree and seasonal demand forecasting.

Feature schema (fixed order)::

    [1, distance_km, days_before_departure, sin_day, cos_day, is_peak]
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .synthgen import PriceObservation, seasonal

FEATURES = ("intercept", "distance_km", "days_before_departure", "sin_day", "cos_day", "is_peak")
DIM = len(FEATURES)


class SingularDesign(ValueError):
    pass


class MapeUndefined(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: tuple
    label: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)


def features(distance_km: float, days_before: int, day_of_year: int, is_peak: int) -> tuple:
    s, c = seasonal(day_of_year)
    return (1.0, float(distance_km), float(days_before), s, c, float(is_peak))


def observation_features(obs: PriceObservation) -> FeatureVector:
    return FeatureVector(features(obs.distance_km, obs.days_before_departure, obs.day_of_year, obs.is_peak),
                         obs.observed_price)


def _design(observations: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    if not observations:
        raise ValueError("no observations")
    dims = {len(o) for o in observations}
    if len(dims) != 1:
        raise ValueError("feature vectors have mixed dimensionality")
    X = np.array([o.values for o in observations], dtype=float)
    y = np.array([o.label for o in observations], dtype=float)
    return X, y


# ---------------------------------------------------------------- regression

@dataclass(frozen=True)
class RegressionModel:
    coefficients: tuple
    rmse: float
    clip_at_zero: bool = True

    def to_dict(self) -> dict:
        return {"type": "ols", "coefficients": list(self.coefficients), "rmse": self.rmse,
                "clip_at_zero": self.clip_at_zero}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegressionModel":
        return cls(tuple(d["coefficients"]), float(d["rmse"]), bool(d.get("clip_at_zero", True)))


def fit_ols(observations: Sequence[FeatureVector], ridge: float = 0.0) -> RegressionModel:
    """Least squares via QR of the design matrix.

    A rank-deficient design raises :class:`SingularDesign` unless ``ridge`` > 0,
    in which case the problem is augmented with ``sqrt(ridge) * I``.
    """
    X, y = _design(observations)
    n, d = X.shape
    if ridge > 0:
        Xs = np.vstack([X, math.sqrt(ridge) * np.eye(d)])
        ys = np.concatenate([y, np.zeros(d)])
    else:
        if n < d or np.linalg.matrix_rank(X) < d:
            raise SingularDesign("singular design matrix")
        Xs, ys = X, y
    # column scaling keeps R well conditioned when feature magnitudes differ
    scale = np.linalg.norm(Xs, axis=0)
    scale[scale == 0] = 1.0
    q, r = np.linalg.qr(Xs / scale)
    beta = np.linalg.solve(r, q.T @ ys) / scale
    resid = y - X @ beta
    return RegressionModel(tuple(float(b) for b in beta), float(math.sqrt(np.mean(resid ** 2))))


def predict_price(model: RegressionModel, fv: FeatureVector | Sequence[float]) -> float:
    values = fv.values if isinstance(fv, FeatureVector) else tuple(fv)
    if len(values) != len(model.coefficients):
        raise ValueError("feature dimension mismatch")
    p = math.fsum(c * v for c, v in zip(model.coefficients, values))
    return max(p, 0.0) if model.clip_at_zero else p


# ---------------------------------------------------------------- tree

@dataclass(frozen=True)
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    label: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.label}
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left, "right": self.right}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TreeNode":
        if "leaf" in d:
            return cls(label=int(d["leaf"]))
        return cls(int(d["feature"]), float(d["threshold"]), int(d["left"]), int(d["right"]))


@dataclass(frozen=True)
class TreeModel:
    """Nodes in preorder; node 0 is the root."""

    nodes: tuple
    max_depth: int
    class_edges: tuple
    n_features: int

    def __post_init__(self):
        edges = tuple(float(e) for e in self.class_edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("class edges must be strictly ascending")
        object.__setattr__(self, "class_edges", edges)

    @property
    def n_classes(self) -> int:
        return len(self.class_edges) + 1

    def depth(self, i: int = 0) -> int:
        node = self.nodes[i]
        if node.is_leaf:
            return 0
        return 1 + max(self.depth(node.left), self.depth(node.right))

    def to_dict(self) -> dict:
        return {"type": "tree", "max_depth": self.max_depth, "class_edges": list(self.class_edges),
                "n_features": self.n_features, "nodes": [n.to_dict() for n in self.nodes]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TreeModel":
        return cls(tuple(TreeNode.from_dict(n) for n in d["nodes"]), int(d["max_depth"]),
                   tuple(d["class_edges"]), int(d["n_features"]))


def price_class(price: float, class_edges: Sequence[float]) -> int:
    """Index of the price range: class k covers [edge[k-1], edge[k])."""
    return bisect.bisect_right(list(class_edges), price)


def _gini_counts(counts: np.ndarray) -> np.ndarray:
    """Gini impurity for rows of class counts."""
    tot = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / tot[..., None]
    g = 1.0 - np.nansum(p * p, axis=-1)
    return np.where(tot > 0, g, 0.0)


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Lowest weighted child Gini over all (feature, midpoint) pairs; ties keep the first."""
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = left[-1] + onehot[-1] - left if n > 1 else left
        valid = np.nonzero(xs[1:] > xs[:-1])[0]
        if valid.size == 0:
            continue
        nl = np.arange(1, n)[valid].astype(float)
        imp = (nl * _gini_counts(left[valid]) + (n - nl) * _gini_counts(right[valid])) / n
        k = int(np.argmin(imp))
        if best is None or imp[k] < best[0]:
            i = valid[k]
            best = (float(imp[k]), f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def fit_tree_arrays(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int,
                    min_samples: int = 2) -> list[TreeNode]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ValueError("empty observations")
    nodes: list[TreeNode] = []

    def build(idx: np.ndarray, depth: int) -> int:
        pos = len(nodes)
        nodes.append(TreeNode())
        counts = np.bincount(y[idx], minlength=n_classes)
        majority = int(np.argmax(counts))
        pure = np.count_nonzero(counts) <= 1
        if depth >= max_depth or pure or len(idx) < min_samples:
            nodes[pos] = TreeNode(label=majority)
            return pos
        split = _best_split(X[idx], y[idx], n_classes)
        parent = float(_gini_counts(counts.astype(float)))
        if split is None or split[0] >= parent - 1e-12:
            nodes[pos] = TreeNode(label=majority)
            return pos
        _, f, thr = split
        mask = X[idx, f] <= thr
        left = build(idx[mask], depth + 1)
        right = build(idx[~mask], depth + 1)
        nodes[pos] = TreeNode(feature=f, threshold=thr, left=left, right=right)
        return pos

    build(np.arange(len(y)), 0)
    return nodes


def fit_tree(observations: Sequence[FeatureVector], class_edges: Sequence[float], max_depth: int,
             min_samples: int = 2) -> TreeModel:
    """Greedy CART on Gini impurity; labels are prices binned by ``class_edges``."""
    if not observations:
        raise ValueError("empty observations")
    X, prices = _design(observations)
    edges = tuple(float(e) for e in class_edges)
    y = np.array([price_class(p, edges) for p in prices], dtype=int)
    nodes = fit_tree_arrays(X, y, len(edges) + 1, max_depth, min_samples)
    return TreeModel(tuple(nodes), max_depth, edges, X.shape[1])


def classify_price_range(tree: TreeModel, fv: FeatureVector | Sequence[float]) -> int:
    values = fv.values if isinstance(fv, FeatureVector) else tuple(fv)
    if len(values) != tree.n_features:
        raise ValueError("feature dimension mismatch")
    node = tree.nodes[0]
    while not node.is_leaf:
        node = tree.nodes[node.left if values[node.feature] <= node.threshold else node.right]
    return node.label


# ---------------------------------------------------------------- demand

@dataclass(frozen=True)
class DemandInterval:
    day_of_year: int
    day_of_week: int


def season_of(day_of_year: int, n_seasons: int) -> int:
    return min(n_seasons - 1, (day_of_year - 1) * n_seasons // 365)


@dataclass(frozen=True)
class DemandModel:
    """Cell means indexed ``[day_of_week][season]`` and a recent moving average."""

    cell_means: tuple
    moving_average: float
    alpha: float
    n_seasons: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"type": "demand", "cell_means": [list(r) for r in self.cell_means],
                "moving_average": self.moving_average, "alpha": self.alpha, "n_seasons": self.n_seasons}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DemandModel":
        return cls(tuple(tuple(r) for r in d["cell_means"]), float(d["moving_average"]),
                   float(d["alpha"]), int(d["n_seasons"]))


def demand_intervals(n_days: int, start_day: int = 1, start_dow: int = 0) -> list[DemandInterval]:
    return [DemandInterval((start_day - 1 + d) % 365 + 1, (start_dow + d) % 7) for d in range(n_days)]


def fit_demand(request_log: Sequence[float], alpha: float = 0.2, window: int = 7, n_seasons: int = 12,
               start_day: int = 1, start_dow: int = 0) -> DemandModel:
    """Seasonal cell means over a daily log plus the mean of its last ``window`` days."""
    if len(request_log) == 0:
        raise ValueError("empty log")
    sums = np.zeros((7, n_seasons))
    counts = np.zeros((7, n_seasons))
    for iv, c in zip(demand_intervals(len(request_log), start_day, start_dow), request_log):
        s = season_of(iv.day_of_year, n_seasons)
        sums[iv.day_of_week, s] += c
        counts[iv.day_of_week, s] += 1
    if (counts == 0).any():
        raise ValueError("log does not cover a full seasonal cycle")
    means = sums / counts
    ma = float(np.mean(request_log[-window:]))
    return DemandModel(tuple(tuple(float(v) for v in row) for row in means), ma, alpha, n_seasons)


def forecast_demand(model: DemandModel, interval: DemandInterval) -> float:
    cell = model.cell_means[interval.day_of_week][season_of(interval.day_of_year, model.n_seasons)]
    return model.alpha * model.moving_average + (1.0 - model.alpha) * cell


# ---------------------------------------------------------------- accuracy

def mape_accuracy(predicted: Sequence[float], truth: Sequence[float]) -> float:
    """100 minus the mean absolute percentage error over nonzero-truth points."""
    pairs = [(p, t) for p, t in zip(predicted, truth) if t != 0]
    if not pairs:
        raise MapeUndefined("MAPE undefined")
    return 100.0 - 100.0 * sum(abs(p - t) / abs(t) for p, t in pairs) / len(pairs)


def eval_accuracy(model, holdout: Sequence) -> float:
    """Accuracy in percent.

    * RegressionModel: holdout of FeatureVector (label = price); 100 - MAPE.
    * TreeModel: holdout of FeatureVector (label = price); percent of correct ranges.
    * DemandModel: holdout of (DemandInterval, count) pairs; 100 - MAPE.
    """
    if not holdout:
        raise ValueError("empty holdout")
    if isinstance(model, RegressionModel):
        return mape_accuracy([predict_price(model, fv) for fv in holdout], [fv.label for fv in holdout])
    if isinstance(model, TreeModel):
        hits = sum(classify_price_range(model, fv) == price_class(fv.label, model.class_edges)
                   for fv in holdout)
        return 100.0 * hits / len(holdout)
    if isinstance(model, DemandModel):
        return mape_accuracy([forecast_demand(model, iv) for iv, _ in holdout], [c for _, c in holdout])
    raise TypeError(f"unsupported model {type(model).__name__}")


# ---------------------------------------------------------------- bundles

@dataclass
class ForecastBundle:
    """Per-kind price models plus the demand model, as served by the quote endpoint."""

    ols: dict = field(default_factory=dict)
    tree: dict = field(default_factory=dict)
    demand: DemandModel | None = None

    def to_dict(self) -> dict:
        return {
            "ols": {k: m.to_dict() for k, m in sorted(self.ols.items())},
            "tree": {k: m.to_dict() for k, m in sorted(self.tree.items())},
            "demand": self.demand.to_dict() if self.demand else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ForecastBundle":
        return cls(
            ols={k: RegressionModel.from_dict(v) for k, v in d.get("ols", {}).items()},
            tree={k: TreeModel.from_dict(v) for k, v in d.get("tree", {}).items()},
            demand=DemandModel.from_dict(d["demand"]) if d.get("demand") else None,
        )


def default_class_edges(prices: Sequence[float], n_classes: int = 4) -> tuple:
    qs = np.quantile(np.asarray(prices, dtype=float), np.linspace(0, 1, n_classes + 1)[1:-1])
    return tuple(sorted(set(round(float(q), 2) for q in qs)))


def group_by_kind(observations: Iterable[PriceObservation]) -> dict[str, list[FeatureVector]]:
    out: dict[str, list[FeatureVector]] = {}
    for o in observations:
        out.setdefault(o.kind.value, []).append(observation_features(o))
    return out


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True, indent=1)


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("type")
    if kind == "ols":
        return RegressionModel.from_dict(d)
    if kind == "tree":
        return TreeModel.from_dict(d)
    if kind == "demand":
        return DemandModel.from_dict(d)
    return ForecastBundle.from_dict(d)


FALLBACK_RIDGE = 1e-6


def train_bundle(observations: Sequence[PriceObservation], demand_log: Sequence[float] = (),
                 max_depth: int = 4, n_classes: int = 4, min_samples: int = 2) -> ForecastBundle:
    """Fit OLS and a price-range tree for every option kind, plus demand if a log is given."""
    bundle = ForecastBundle()
    for kind, fvs in sorted(group_by_kind(observations).items()):
        if len(fvs) < DIM:
            continue
        try:
            bundle.ols[kind] = fit_ols(fvs)
        except SingularDesign:
            # e.g. hotels (distance always 0) or a two-city map (one distance):
            # a tiny ridge picks the minimum-norm split between collinear columns
            bundle.ols[kind] = fit_ols(fvs, ridge=FALLBACK_RIDGE)
        edges = default_class_edges([fv.label for fv in fvs], n_classes)
        bundle.tree[kind] = fit_tree(fvs, edges, max_depth, min_samples)
    if len(demand_log) >= 365:
        bundle.demand = fit_demand(demand_log)
    return bundle
