"""Genetic-algorithm itinerary optimization with an exhaustive oracle.

A chromosome holds one gene per slot: an index into that slot's candidate
list. Slots are time-decoupled (each transport slot owns a disjoint window),
so any gene combination decodes to a valid itinerary.

Operators work on whole batches of chromosomes (``(n, slots)`` int arrays);
the single-chromosome functions are the ``n == 1`` case of the same code.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import (
    MINUTES_PER_DAY,
    Catalog,
    Itinerary,
    Kind,
    TravelOption,
    TripRequest,
)
from .rng import Stream
from .sustainability import CarbonConfig, carbon_estimate

ORACLE_GUARD = 10 ** 6


class InfeasibleRequest(ValueError):
    pass


class SearchSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 100
    tournament_size: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    elitism_count: int = 2
    seed: int = 0
    convergence_patience: int = 20

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 <= self.elitism_count < self.population_size:
            raise ValueError("elitism_count must be in [0, population_size)")
        if not (0.0 <= self.crossover_rate <= 1.0 and 0.0 <= self.mutation_rate <= 1.0):
            raise ValueError("rates must lie in [0, 1]")
        if self.tournament_size < 1 or self.generations < 0 or self.convergence_patience < 1:
            raise ValueError("tournament_size, generations and patience must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping) -> "GaConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def slot_windows(request: TripRequest) -> list[tuple[int, int] | None]:
    """Disjoint ``[lo, hi]`` time windows per transport slot (None for the hotel).

    The free time of the request (minus the stay, on round trips) is split
    evenly across transport legs, with a one-minute gap between windows; the
    last window ends at ``latest_arrival``.
    """
    layout = request.layout()
    n_legs = sum(1 for role, _, _ in layout if role != "hotel")
    stay = request.nights * MINUTES_PER_DAY if request.round_trip else 0
    free = request.latest_arrival - request.earliest_departure - stay
    if n_legs == 0 or free < 2 * n_legs:
        raise InfeasibleRequest("infeasible request: window too short for the trip layout")
    width = free // n_legs
    windows: list[tuple[int, int] | None] = []
    t = request.earliest_departure
    leg = 0
    for role, _, _ in layout:
        if role == "hotel":
            windows.append(None)
            continue
        if role == "ret" and leg == sum(1 for r, _, _ in layout if r == "out"):
            t += stay
        hi = request.latest_arrival if leg == n_legs - 1 else t + width - 1
        windows.append((t, hi))
        t += width
        leg += 1
    return windows


def build_slot_candidates(catalog: Catalog, request: TripRequest) -> list[list[TravelOption]]:
    """Options allowed in each slot, sorted by id."""
    if len(catalog) == 0:
        raise ValueError("catalog is empty")
    layout = request.layout()
    windows = slot_windows(request)
    out = []
    for i, ((role, a, b), win) in enumerate(zip(layout, windows)):
        if role == "hotel":
            cands = [h for h in catalog.hotels(b) if h.capacity >= request.nights]
        else:
            lo, hi = win
            cands = [o for o in catalog.route(a, b)
                     if o.capacity >= 1 and o.depart_time >= lo and o.arrive_time <= hi]
        if not cands:
            raise InfeasibleRequest(f"infeasible request: no candidates for slot {i} ({role} {a}->{b})")
        out.append(sorted(cands, key=lambda o: o.id))
    return out


@dataclass
class SlotTables:
    """Per-slot attribute arrays used for vectorized fitness."""

    cost: list[np.ndarray]
    time: list[np.ndarray]
    carbon: list[np.ndarray]
    pref: list[np.ndarray]
    is_transport: list[bool]
    counts: np.ndarray
    bounds: dict = field(default_factory=dict)


def slot_tables(candidates: Sequence[Sequence[TravelOption]], request: TripRequest,
                carbon_config: CarbonConfig | None = None) -> SlotTables:
    cfg = carbon_config or CarbonConfig()
    prefs = request.preferred_modes
    cost, time, carbon, pref, transport = [], [], [], [], []
    for cands in candidates:
        cost.append(np.array([o.price for o in cands], dtype=float))
        time.append(np.array([o.duration if o.kind.is_transport else 0 for o in cands], dtype=float))
        carbon.append(np.array([carbon_estimate(o, cfg, request.nights) for o in cands], dtype=float))
        pref.append(np.array([1.0 if o.kind in prefs else 0.0 for o in cands], dtype=float))
        transport.append(cands[0].kind.is_transport)
    tables = SlotTables(cost, time, carbon, pref, transport,
                        np.array([len(c) for c in candidates], dtype=np.int64))
    tables.bounds = pool_bounds(tables)
    return tables


def pool_bounds(tables: SlotTables) -> dict:
    """(min, max) of itinerary totals over every combination of slot candidates."""
    out = {}
    for name in ("cost", "time", "carbon"):
        cols = getattr(tables, name)
        out[name] = (float(sum(c.min() for c in cols)), float(sum(c.max() for c in cols)))
    return out


def _norm(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi - lo == 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def fitness_batch(genes: np.ndarray, tables: SlotTables, request: TripRequest,
                  bounds: dict | None = None) -> np.ndarray:
    genes = np.atleast_2d(np.asarray(genes, dtype=np.int64))
    if genes.shape[1] != len(tables.counts) or (genes < 0).any() or (genes >= tables.counts).any():
        raise ValueError("invalid chromosome")
    b = bounds or tables.bounds
    n = genes.shape[0]
    cost = np.zeros(n)
    time = np.zeros(n)
    carbon = np.zeros(n)
    pref = np.zeros(n)
    legs = 0
    for s in range(genes.shape[1]):
        g = genes[:, s]
        cost += tables.cost[s][g]
        time += tables.time[s][g]
        carbon += tables.carbon[s][g]
        if tables.is_transport[s]:
            pref += tables.pref[s][g]
            legs += 1
    if not request.preferred_modes or legs == 0:
        pref_match = np.ones(n)
    else:
        pref_match = pref / legs
    w = request.weights
    return (w.w_cost * (1.0 - _norm(cost, *b["cost"]))
            + w.w_time * (1.0 - _norm(time, *b["time"]))
            + w.w_pref * pref_match
            + w.w_eco * (1.0 - _norm(carbon, *b["carbon"])))


def fitness(chromosome: Sequence[int], tables: SlotTables, request: TripRequest,
            bounds: dict | None = None) -> float:
    return float(fitness_batch(np.asarray(chromosome)[None, :], tables, request, bounds)[0])


def decode(chromosome: Sequence[int], candidates: Sequence[Sequence[TravelOption]],
           request: TripRequest) -> Itinerary:
    return Itinerary(tuple(candidates[s][int(g)].id for s, g in enumerate(chromosome)), request.nights)


# ---------------------------------------------------------------- operators

def init_population(counts: Sequence[int], config: GaConfig, rng: Stream) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    return rng.integers(counts, (config.population_size, len(counts)))


def select_tournament_batch(fitnesses: np.ndarray, n: int, config: GaConfig, rng: Stream) -> np.ndarray:
    """Population indices of ``n`` tournament winners.

    Each tournament samples ``tournament_size`` members with replacement; the
    fittest wins, ties going to the lowest population index.
    """
    pop = len(fitnesses)
    picks = rng.integers(pop, (n, config.tournament_size))
    f = fitnesses[picks]
    best = f.max(axis=1, keepdims=True)
    return np.where(f == best, picks, pop).min(axis=1)


def select_tournament(population: np.ndarray, fitnesses: Sequence[float], config: GaConfig,
                      rng: Stream) -> np.ndarray:
    idx = select_tournament_batch(np.asarray(fitnesses, dtype=float), 1, config, rng)[0]
    return np.asarray(population)[idx].copy()


def crossover_batch(a: np.ndarray, b: np.ndarray, config: GaConfig, rng: Stream) -> tuple[np.ndarray, np.ndarray]:
    """One-point crossover per row pair; the suffix from the cut point is swapped."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("parents must have equal slot counts")
    n, slots = a.shape
    do = rng.random_array(n) < config.crossover_rate
    if slots < 2:
        return a.copy(), b.copy()
    cuts = 1 + rng.integers(slots - 1, n)
    swap = (np.arange(slots)[None, :] >= cuts[:, None]) & do[:, None]
    return np.where(swap, b, a), np.where(swap, a, b)


def crossover_onepoint(a: Sequence[int], b: Sequence[int], config: GaConfig,
                       rng: Stream) -> tuple[np.ndarray, np.ndarray]:
    c1, c2 = crossover_batch(np.asarray(a)[None, :], np.asarray(b)[None, :], config, rng)
    return c1[0], c2[0]


def cut_at(a: Sequence[int], b: Sequence[int], cut: int) -> tuple[tuple, tuple]:
    """Deterministic one-point crossover at ``cut``."""
    a, b = tuple(a), tuple(b)
    return a[:cut] + b[cut:], b[:cut] + a[cut:]


def mutate_batch(genes: np.ndarray, counts: Sequence[int], config: GaConfig, rng: Stream) -> np.ndarray:
    """Each gene is resampled uniformly from its slot with probability ``mutation_rate``."""
    genes = np.asarray(genes)
    counts = np.asarray(counts, dtype=np.int64)
    hit = rng.random_array(genes.shape) < config.mutation_rate
    fresh = rng.integers(counts[None, :], genes.shape)
    return np.where(hit, fresh, genes)


def mutate(chromosome: Sequence[int], counts: Sequence[int], config: GaConfig, rng: Stream) -> np.ndarray:
    return mutate_batch(np.asarray(chromosome)[None, :], counts, config, rng)[0]


# ---------------------------------------------------------------- search

@dataclass
class GaTrace:
    best_fitness: list = field(default_factory=list)
    mean_fitness: list = field(default_factory=list)
    best_chromosome: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def generations(self) -> int:
        return len(self.best_fitness)

    def to_dict(self) -> dict:
        return {
            "generations": self.generations,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "best_chromosome": self.best_chromosome,
            "stopped_early": self.stopped_early,
        }


@dataclass
class GaResult:
    itinerary: Itinerary
    chromosome: tuple
    fitness: float
    trace: GaTrace
    candidates: list
    tables: SlotTables


def evolve(catalog: Catalog, request: TripRequest, config: GaConfig | None = None,
           carbon_config: CarbonConfig | None = None) -> GaResult:
    """Run the GA; a pure function of its arguments (including ``config.seed``)."""
    config = config or GaConfig()
    candidates = build_slot_candidates(catalog, request)
    tables = slot_tables(candidates, request, carbon_config)
    rng = Stream(config.seed, 11)
    pop = init_population(tables.counts, config, rng)
    fit = fitness_batch(pop, tables, request)
    trace = GaTrace()
    best_ever = (-math.inf, None)
    stagnant = 0
    P = config.population_size
    for gen in range(config.generations + 1):
        i = int(np.argmax(fit))
        trace.best_fitness.append(float(fit[i]))
        trace.mean_fitness.append(float(fit.mean()))
        trace.best_chromosome.append([int(g) for g in pop[i]])
        if fit[i] > best_ever[0]:
            best_ever = (float(fit[i]), pop[i].copy())
            stagnant = 0
        else:
            stagnant += 1
        if gen == config.generations:
            break
        if stagnant >= config.convergence_patience:
            trace.stopped_early = True
            break
        order = np.argsort(-fit, kind="stable")
        elites = pop[order[: config.elitism_count]]
        n_children = P - config.elitism_count
        n_pairs = (n_children + 1) // 2
        parents = select_tournament_batch(fit, 2 * n_pairs, config, rng)
        c1, c2 = crossover_batch(pop[parents[0::2]], pop[parents[1::2]], config, rng)
        children = np.empty((2 * n_pairs, pop.shape[1]), dtype=np.int64)
        children[0::2] = c1
        children[1::2] = c2
        children = mutate_batch(children[:n_children], tables.counts, config, rng)
        pop = np.vstack([elites, children])
        fit = fitness_batch(pop, tables, request)
    chrom = tuple(int(g) for g in best_ever[1])
    return GaResult(decode(chrom, candidates, request), chrom, best_ever[0], trace, candidates, tables)


def brute_force_optimum(catalog: Catalog, request: TripRequest,
                        carbon_config: CarbonConfig | None = None) -> GaResult:
    """Exhaustive search; ties go to the lexicographically smallest gene tuple."""
    candidates = build_slot_candidates(catalog, request)
    tables = slot_tables(candidates, request, carbon_config)
    total = int(np.prod([int(c) for c in tables.counts]))
    if total > ORACLE_GUARD:
        raise SearchSpaceTooLarge(f"search space too large: {total} combinations")
    genes = np.array(list(itertools.product(*(range(int(c)) for c in tables.counts))), dtype=np.int64)
    fit = fitness_batch(genes, tables, request)
    i = int(np.argmax(fit))
    chrom = tuple(int(g) for g in genes[i])
    return GaResult(decode(chrom, candidates, request), chrom, float(fit[i]), GaTrace(), candidates, tables)
