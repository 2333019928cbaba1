"""NSGA-II over (centroid index, eight log10 MPC weights), minimizing two objectives.

The genome mixes one categorical gene (which centroid model to fly) with
eight real genes. Real genes use SBX and polynomial mutation; the
categorical gene is swapped or redrawn uniformly, since neighbouring
centroid indices mean nothing.

All random draws happen in the sequential generation loop. Evaluation is
handed a whole batch at once, so a parallel evaluator cannot change the
outcome.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .design_space import latin_hypercube
from .errors import EmptyFeasibleSet, EvaluatorFailure
from .evaluation import Objectives
from .mpc import WEIGHT_NAMES, ControlWeights

N_WEIGHTS = 8


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 60
    crossover_prob: float = 0.90
    mutation_prob: float = 0.11
    sbx_eta: float = 15.0
    pm_eta: float = 20.0
    seed: int = 0
    k: int = 100
    weight_bounds: tuple[tuple[float, float], ...] = ((-2.0, 4.0),) * N_WEIGHTS

    def validate(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be positive")
        if len(self.weight_bounds) != N_WEIGHTS or any(lo > hi for lo, hi in self.weight_bounds):
            raise ValueError("need 8 (lo, hi) weight bounds with lo <= hi")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.weight_bounds], float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.weight_bounds], float)

    def to_dict(self):
        return {
            "population": self.population, "generations": self.generations,
            "crossover_prob": self.crossover_prob, "mutation_prob": self.mutation_prob,
            "sbx_eta": self.sbx_eta, "pm_eta": self.pm_eta, "seed": self.seed, "k": self.k,
            "weight_bounds": [list(b) for b in self.weight_bounds],
        }

    @classmethod
    def from_dict(cls, d) -> "GaConfig":
        d = dict(d)
        if "weight_bounds" in d:
            d["weight_bounds"] = tuple((float(lo), float(hi)) for lo, hi in d["weight_bounds"])
        return cls(**d)


@dataclass(frozen=True)
class Genome:
    centroid: int
    log_weights: tuple[float, ...]

    def weights(self) -> ControlWeights:
        return ControlWeights.from_log10(np.asarray(self.log_weights))

    def valid(self, config: GaConfig) -> bool:
        w = np.asarray(self.log_weights)
        return (0 <= self.centroid < config.k and w.size == N_WEIGHTS
                and bool(np.all(w >= config.lower) and np.all(w <= config.upper)))


@dataclass
class Individual:
    genome: Genome
    candidate_id: int
    generation: int
    objectives: Objectives | None = None
    rank: int = -1
    crowding: float = 0.0


# ---------------------------------------------------------------------------
# Sorting
# ---------------------------------------------------------------------------

def _key(x):
    if isinstance(x, Objectives):
        return x.as_tuple()
    if hasattr(x, "objectives"):
        return x.objectives.as_tuple()
    return tuple(x)


def dominates(a, b) -> bool:
    a, b = _key(a), _key(b)
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def non_dominated_sort(points) -> list[list[int]]:
    """Fronts as lists of indices into ``points``, best front first."""
    if len(points) == 0:
        return []
    F = np.array([_key(p) for p in points], float)
    n = F.shape[0]
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt                          # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current.tolist())
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def crowding_distance(points) -> np.ndarray:
    F = np.array([_key(p) for p in points], float).reshape(len(points), -1)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = math.inf
        return dist
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        lo, hi = F[order[0], j], F[order[-1], j]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo:
            continue
        gaps = (F[order[2:], j] - F[order[:-2], j]) / (hi - lo)
        dist[order[1:-1]] += gaps
    return dist


def assign_rank_and_crowding(pop: Sequence[Individual]) -> list[list[int]]:
    fronts = non_dominated_sort([ind.objectives for ind in pop])
    for r, front in enumerate(fronts):
        cd = crowding_distance([pop[i].objectives for i in front])
        for i, d in zip(front, cd):
            pop[i].rank = r
            pop[i].crowding = float(d)
    return fronts


# ---------------------------------------------------------------------------
# Variation
# ---------------------------------------------------------------------------

def tournament_select(pop: Sequence[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament: lower rank, then larger crowding, then a coin flip."""
    i, j = rng.choice(len(pop), size=2, replace=len(pop) < 2)
    a, b = pop[i], pop[j]
    coin = rng.random() < 0.5
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if coin else b


def sbx_pair(x1: np.ndarray, x2: np.ndarray, eta: float, rng: np.random.Generator):
    """Simulated binary crossover, gene by gene; children are symmetric about the parents' mean."""
    u = rng.random(x1.shape)
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))
    mean = 0.5 * (x1 + x2)
    half = 0.5 * beta * (x2 - x1)
    return mean - half, mean + half


def crossover(p1: Genome, p2: Genome, rng: np.random.Generator, config: GaConfig):
    fire = rng.random() < config.crossover_prob
    x1 = np.asarray(p1.log_weights, float)
    x2 = np.asarray(p2.log_weights, float)
    c1, c2 = sbx_pair(x1, x2, config.sbx_eta, rng)
    swap = rng.random() < 0.5
    if not fire:
        return p1, p2
    lo, hi = config.lower, config.upper
    c1 = np.clip(c1, lo, hi)
    c2 = np.clip(c2, lo, hi)
    k1, k2 = (p2.centroid, p1.centroid) if swap else (p1.centroid, p2.centroid)
    return (Genome(k1, tuple(float(v) for v in c1)), Genome(k2, tuple(float(v) for v in c2)))


def mutation_mask(rng: np.random.Generator, config: GaConfig) -> np.ndarray:
    """Which of the nine genes mutate: index 0 is the centroid, 1..8 the weights."""
    return rng.random(1 + N_WEIGHTS) < config.mutation_prob


def polynomial_mutation(x: np.ndarray, lo: np.ndarray, hi: np.ndarray, eta: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation; perturbation shrinks near either bound."""
    u = rng.random(x.shape)
    width = np.where(hi > lo, hi - lo, 1.0)
    d1 = (x - lo) / width
    d2 = (hi - x) / width
    p = 1.0 / (eta + 1.0)
    left = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
    right = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
    delta = np.where(u < 0.5, left ** p - 1.0, 1.0 - right ** p)
    return np.clip(x + delta * (hi - lo), lo, hi)


def mutate(g: Genome, rng: np.random.Generator, config: GaConfig) -> Genome:
    mask = mutation_mask(rng, config)
    redraw = int(rng.integers(config.k))
    w = np.asarray(g.log_weights, float)
    mutated = polynomial_mutation(w, config.lower, config.upper, config.pm_eta, rng)
    w = np.where(mask[1:], mutated, w)
    centroid = redraw if mask[0] else g.centroid
    return Genome(centroid, tuple(float(v) for v in w))


def initial_population(config: GaConfig, rng: np.random.Generator) -> list[Genome]:
    """Uniform Latin hypercube over centroid strata and log-weight strata."""
    unit, _ = latin_hypercube(config.population, 1 + N_WEIGHTS, rng)
    lo, hi = config.lower, config.upper
    out = []
    for row in unit:
        centroid = min(int(row[0] * config.k), config.k - 1)
        w = lo + row[1:] * (hi - lo)
        out.append(Genome(centroid, tuple(float(v) for v in w)))
    return out


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

BatchEvaluator = Callable[[Sequence[Individual]], Sequence[Objectives]]


@dataclass
class EvolutionResult:
    population: list[Individual]
    archive: list[Individual] = field(default_factory=list)


def _evaluate(batch: list[Individual], evaluate: BatchEvaluator):
    try:
        results = list(evaluate(batch))
    except Exception as exc:   # candidate failures are penalties, so this is a harness fault
        raise EvaluatorFailure(f"evaluator raised {type(exc).__name__}: {exc}") from exc
    if len(results) != len(batch):
        raise EvaluatorFailure(f"evaluator returned {len(results)} results for {len(batch)} candidates")
    for ind, obj in zip(batch, results):
        ind.objectives = obj


def _truncate(pool: list[Individual], size: int) -> list[Individual]:
    fronts = assign_rank_and_crowding(pool)
    chosen: list[Individual] = []
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(pool[i] for i in front)
            continue
        ranked = sorted(front, key=lambda i: (-pool[i].crowding, i))
        chosen.extend(pool[i] for i in ranked[: size - len(chosen)])
        break
    return chosen


def evolve(config: GaConfig, evaluate: BatchEvaluator, initial: Sequence[Genome] | None = None,
           on_generation: Callable[[int, list[Individual], list[Individual]], None] | None = None
           ) -> EvolutionResult:
    """Run NSGA-II for ``config.generations`` rounds after the initial population.

    ``evaluate`` receives each generation's new individuals as one batch and
    returns their objectives in order. ``on_generation(gen, population,
    new_individuals)`` fires after every selection step, starting with
    generation 0 (the initial population).
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    genomes = list(initial) if initial is not None else initial_population(config, rng)
    if len(genomes) != config.population:
        raise ValueError("initial population size must match config.population")
    next_id = 0
    pop = []
    for g in genomes:
        pop.append(Individual(g, next_id, 0))
        next_id += 1
    _evaluate(pop, evaluate)
    archive = list(pop)
    pop = _truncate(pop, config.population)
    if on_generation:
        on_generation(0, pop, list(archive))

    for gen in range(1, config.generations + 1):
        children: list[Individual] = []
        while len(children) < config.population:
            a = tournament_select(pop, rng)
            b = tournament_select(pop, rng)
            c1, c2 = crossover(a.genome, b.genome, rng, config)
            for c in (mutate(c1, rng, config), mutate(c2, rng, config)):
                children.append(Individual(c, next_id, gen))
                next_id += 1
        _evaluate(children, evaluate)
        archive.extend(children)
        pop = _truncate(pop + children, config.population)
        if on_generation:
            on_generation(gen, pop, children)
    return EvolutionResult(pop, archive)


def pareto_front(archive: Sequence) -> list:
    """Feasible, mutually non-dominated members of ``archive``, in archive order."""
    feasible = [a for a in archive if _objectives(a).feasible]
    if not feasible:
        raise EmptyFeasibleSet("no feasible candidate in the archive")
    fronts = non_dominated_sort([_objectives(a) for a in feasible])
    return [feasible[i] for i in sorted(fronts[0])]


def _objectives(item) -> Objectives:
    return item if isinstance(item, Objectives) else item.objectives


FRONT_COLUMNS = ("candidate_id", "model_id", "centroid_index", *WEIGHT_NAMES, "mse_total", "energy", "rank")


def write_front_csv(path, rows: Sequence[dict]):
    """``rows`` hold the FRONT_COLUMNS keys; weights are written as physical values."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRONT_COLUMNS)
        for r in rows:
            writer.writerow([r[c] if isinstance(r[c], int) else repr(float(r[c])) for c in FRONT_COLUMNS])
