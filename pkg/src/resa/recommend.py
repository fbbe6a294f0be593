"""User-based collaborative filtering, content scoring and list blending.

All returned lists are ordered by (score descending, option id ascending).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import BudgetBand, Catalog, Kind, TravelOption, UserProfile
from .sustainability import DEFAULT_FACTORS

NEUTRAL = 0.5


class Source(str, enum.Enum):
    COLLABORATIVE = "Collaborative"
    CONTENT = "Content"
    BLENDED = "Blended"


@dataclass(frozen=True)
class Recommendation:
    option_id: str
    score: float
    source: Source

    def to_dict(self) -> dict:
        return {"option_id": self.option_id, "score": self.score, "source": Source(self.source).value}


@dataclass
class Recommendations:
    """A ranked list plus any condition flags ('cold start', ...)."""

    items: list[Recommendation] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def ids(self) -> list[str]:
        return [r.option_id for r in self.items]

    def to_dict(self) -> dict:
        return {"recommendations": [r.to_dict() for r in self.items], "flags": list(self.flags)}


def _ranked(scores: dict[str, float], source: Source, n: int) -> list[Recommendation]:
    if n <= 0:
        return []
    order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [Recommendation(oid, float(s), source) for oid, s in order[:n]]


class RatingMatrix:
    """Dense users x options matrix; absent ratings are NaN."""

    def __init__(self, user_ids: Sequence[str], option_ids: Sequence[str], values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != (len(user_ids), len(option_ids)):
            raise ValueError("matrix shape does not match the user/option universes")
        present = values[~np.isnan(values)]
        if present.size and (present.min() < 1 or present.max() > 5):
            raise ValueError("ratings must lie in [1, 5]")
        self.user_ids = list(user_ids)
        self.option_ids = list(option_ids)
        self.values = values
        self.values.setflags(write=False)
        self._row = {u: i for i, u in enumerate(self.user_ids)}
        self._sims: dict[str, list] = {}

    @classmethod
    def from_profiles(cls, users: Iterable[UserProfile], option_ids: Sequence[str]) -> "RatingMatrix":
        users = list(users)
        col = {oid: j for j, oid in enumerate(option_ids)}
        m = np.full((len(users), len(option_ids)), np.nan)
        for i, u in enumerate(users):
            for oid, r in u.booking_history:
                if oid not in col:
                    raise ValueError(f"history of {u.user_id} references unknown option {oid}")
                m[i, col[oid]] = r
        return cls([u.user_id for u in users], list(option_ids), m)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._row

    def row(self, user_id: str) -> np.ndarray:
        return self.values[self._row[user_id]]

    def similar_users(self, user_id: str) -> list[tuple[float, int]]:
        """``(similarity, row)`` of every other user with positive similarity, most similar first.

        The matrix is immutable, so the list is computed once per user.
        """
        cached = self._sims.get(user_id)
        if cached is None:
            target = self.row(user_id)
            cached = []
            for idx, other in enumerate(self.user_ids):
                if other == user_id:
                    continue
                s = cosine_similarity(target, self.values[idx])
                if s > 0:
                    cached.append((s, idx))
            cached.sort(key=lambda t: (-t[0], t[1]))
            self._sims[user_id] = cached
        return cached


def co_rated(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return ~np.isnan(u) & ~np.isnan(v)


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine of two rating rows, each mean-centered over their co-rated items.

    Absent ratings are NaN. Rows with no co-rated items, or whose centered
    vectors vanish, have similarity 0 (see :func:`co_rated` to tell the
    cases apart).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    mask = co_rated(u, v)
    if not mask.any():
        return 0.0
    a = u[mask] - u[mask].mean()
    b = v[mask] - v[mask].mean()
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(a @ b) / (na * nb)))


def recommend_collaborative(matrix: RatingMatrix, user_id: str, k_neighbors: int, n: int) -> Recommendations:
    """Predict unrated items from the k most similar users (positive similarity only)."""
    if user_id not in matrix:
        raise KeyError(user_id)
    target = matrix.row(user_id)
    rated = ~np.isnan(target)
    if not rated.any():
        return Recommendations([], ["cold start"])
    neighbors = matrix.similar_users(user_id)[: max(0, k_neighbors)]
    flags = [] if neighbors else ["no neighbors"]
    num = np.zeros(len(matrix.option_ids))
    den = np.zeros(len(matrix.option_ids))
    for s, idx in neighbors:
        r = matrix.values[idx]
        has = ~np.isnan(r)
        num[has] += s * r[has]
        den[has] += s
    scores = {
        matrix.option_ids[j]: num[j] / den[j]
        for j in range(len(matrix.option_ids))
        if not rated[j] and den[j] > 0
    }
    return Recommendations(_ranked(scores, Source.COLLABORATIVE, n), flags)


def price_bands(catalog: Catalog) -> dict[str, BudgetBand]:
    """Tercile price band of every option, computed within its kind."""
    by_kind: dict[Kind, list[TravelOption]] = {}
    for o in catalog.options:
        by_kind.setdefault(o.kind, []).append(o)
    bands: dict[str, BudgetBand] = {}
    for opts in by_kind.values():
        prices = np.array([o.price for o in opts])
        lo, hi = np.quantile(prices, [1 / 3, 2 / 3])
        for o in opts:
            bands[o.id] = BudgetBand.LOW if o.price <= lo else BudgetBand.MID if o.price <= hi else BudgetBand.HIGH
    return bands


_MAX_FACTOR = max(DEFAULT_FACTORS.values())


def option_eco(option: TravelOption) -> float:
    """Eco attribute in [0, 1]: hotel rating, or one minus the relative mode emission factor."""
    if option.kind is Kind.HOTEL:
        return option.eco_rating
    return 1.0 - DEFAULT_FACTORS[option.kind] / _MAX_FACTOR


def content_criteria(profile: UserProfile, option: TravelOption,
                     bands: dict[str, BudgetBand]) -> tuple[float, float, float]:
    if not profile.preferred_modes or option.kind is Kind.HOTEL:
        mode = NEUTRAL
    else:
        mode = 1.0 if option.kind in profile.preferred_modes else 0.0
    band = 1.0 if bands.get(option.id) is profile.budget_band else 0.0
    eco = 1.0 - abs(option_eco(option) - profile.eco_affinity)
    return mode, band, eco


def content_score(profile: UserProfile, option: TravelOption, bands: dict[str, BudgetBand],
                  weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> float:
    total = sum(weights)
    crit = content_criteria(profile, option, bands)
    return sum(w * c for w, c in zip(weights, crit)) / total


def recommend_content(profile: UserProfile, catalog: Catalog, n: int,
                      weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
                      bands: dict[str, BudgetBand] | None = None) -> Recommendations:
    if len(catalog) == 0:
        return Recommendations()
    bands = bands if bands is not None else price_bands(catalog)
    scores = {o.id: content_score(profile, o, bands, weights) for o in catalog.options}
    return Recommendations(_ranked(scores, Source.CONTENT, n))


def _minmax(recs: Iterable[Recommendation]) -> dict[str, float]:
    recs = list(recs)
    if not recs:
        return {}
    lo = min(r.score for r in recs)
    hi = max(r.score for r in recs)
    if hi == lo:
        return {r.option_id: 1.0 for r in recs}
    return {r.option_id: (r.score - lo) / (hi - lo) for r in recs}


def blend(cf: Iterable[Recommendation], cb: Iterable[Recommendation], lam: float, n: int) -> list[Recommendation]:
    """Convex combination of min-max normalized scores; a missing side contributes 0."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    a = _minmax(cf)
    b = _minmax(cb)
    scores = {oid: lam * a.get(oid, 0.0) + (1.0 - lam) * b.get(oid, 0.0) for oid in set(a) | set(b)}
    return _ranked(scores, Source.BLENDED, n)


@dataclass
class Recommender:
    """Bundles the matrix and catalog the recommendation endpoint needs."""

    catalog: Catalog
    users: dict[str, UserProfile]
    matrix: RatingMatrix
    k_neighbors: int = 10
    lam: float = 0.5
    content_weights: tuple = (1.0, 1.0, 1.0)
    pool: int = 50
    bands: dict | None = None

    @classmethod
    def build(cls, catalog: Catalog, users: Iterable[UserProfile], **kw) -> "Recommender":
        users = list(users)
        matrix = RatingMatrix.from_profiles(users, [o.id for o in catalog.options])
        return cls(catalog, {u.user_id: u for u in users}, matrix, bands=price_bands(catalog), **kw)

    def recommend(self, user_id: str, n: int) -> Recommendations:
        profile = self.users[user_id]
        cb = recommend_content(profile, self.catalog, self.pool, self.content_weights, self.bands)
        if n <= 0:
            return Recommendations([], [])
        cf = recommend_collaborative(self.matrix, user_id, self.k_neighbors, self.pool)
        if "cold start" in cf.flags:
            return Recommendations(cb.items[:n], ["cold start", "content only"])
        rated = {oid for oid, _ in profile.booking_history}
        cb_items = [r for r in cb.items if r.option_id not in rated]
        return Recommendations(blend(cf.items, cb_items, self.lam, n), cf.flags)
