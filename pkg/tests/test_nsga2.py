import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from jetcodesign.errors import EmptyFeasibleSet, EvaluatorFailure
from jetcodesign.evaluation import Objectives
from jetcodesign.mpc import FailureReason
from jetcodesign.nsga2 import (FRONT_COLUMNS, GaConfig, Genome, Individual, crossover,
                               crowding_distance, dominates, evolve, initial_population, mutate,
                               mutation_mask, non_dominated_sort, pareto_front, polynomial_mutation,
                               tournament_select, write_front_csv)

import oracles

CFG = GaConfig(population=16, generations=10, seed=3, k=20)


def test_dominates_examples():
    assert dominates((1, 1), (2, 2))
    assert not dominates((1, 2), (2, 1)) and not dominates((2, 1), (1, 2))
    assert not dominates((1, 1), (1, 1))


def test_sort_examples():
    assert [sorted(f) for f in non_dominated_sort([(1, 2), (2, 1), (3, 3)])] == [[0, 1], [2]]
    assert non_dominated_sort([(1, 1)] * 5) == [[0, 1, 2, 3, 4]]
    assert non_dominated_sort([(1, 1), (2, 2), (3, 3)]) == [[0], [1], [2]]
    assert non_dominated_sort([]) == []


def random_population(rng):
    n = int(rng.integers(1, 65))
    # coarse grid values make ties and duplicates common
    if rng.random() < 0.5:
        return [tuple(p) for p in rng.integers(0, 6, size=(n, 2)).astype(float)]
    return [tuple(p) for p in rng.random((n, 2))]


def test_sort_matches_brute_force_on_1000_populations():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        pts = random_population(rng)
        got = [sorted(f) for f in non_dominated_sort(pts)]
        assert got == oracles.brute_force_fronts(pts)


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([(0, 0), (1, 1)])))
    assert np.all(np.isinf(crowding_distance([(3, 3)])))
    d = crowding_distance([(0, 2), (1, 1), (2, 0)])
    assert math.isinf(d[0]) and math.isinf(d[2]) and d[1] == 2.0
    d = crowding_distance([(0, 5), (1, 5), (3, 5), (4, 5)])
    # second objective has zero range and adds nothing; first gives (3-0)/4 and (4-1)/4
    assert d[1] == 0.75 and d[2] == 0.75


@given(pts=st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=30))
def test_crowding_non_negative(pts):
    assert np.all(crowding_distance(pts) >= 0)


def _ind(rank, crowding, cid=0):
    ind = Individual(Genome(0, (0.0,) * 8), cid, 0, Objectives(0, 0, True))
    ind.rank, ind.crowding = rank, crowding
    return ind


def test_tournament_orders():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert tournament_select([_ind(0, 1.0, 0), _ind(3, 9.0, 1)], rng).candidate_id == 0
        assert tournament_select([_ind(1, math.inf, 0), _ind(1, 1.2, 1)], rng).candidate_id == 0


def test_tournament_coin_is_fair():
    rng = np.random.default_rng(1)
    pop = [_ind(0, 1.0, 0), _ind(0, 1.0, 1)]
    wins = np.bincount([tournament_select(pop, rng).candidate_id for _ in range(10_000)], minlength=2)
    assert chisquare(wins).pvalue > 0.001


def test_crossover_degenerate_cases():
    rng = np.random.default_rng(2)
    g = Genome(4, tuple(np.linspace(-1, 3, 8)))
    for _ in range(100):
        a, b = crossover(g, g, rng, CFG)
        assert a.log_weights == g.log_weights and b.log_weights == g.log_weights
    p1, p2 = Genome(1, (0.0,) * 8), Genome(2, (1.0,) * 8)
    never = dataclasses.replace(CFG, crossover_prob=0.0)
    for _ in range(100):
        assert crossover(p1, p2, rng, never) == (p1, p2)


def test_sbx_is_mean_preserving():
    rng = np.random.default_rng(3)
    wide = dataclasses.replace(CFG, crossover_prob=1.0, weight_bounds=((-100.0, 100.0),) * 8)
    p1, p2 = Genome(0, (0.5,) * 8), Genome(0, (1.5,) * 8)
    kids = np.array([c.log_weights for _ in range(10_000) for c in crossover(p1, p2, rng, wide)])
    assert np.all(np.abs(kids.mean(axis=0) - 1.0) <= 0.01)


def test_crossover_frequency():
    rng = np.random.default_rng(4)
    p1, p2 = Genome(0, (0.0,) * 8), Genome(1, (1.0,) * 8)
    fired = sum(crossover(p1, p2, rng, CFG)[0].log_weights != p1.log_weights for _ in range(100_000))
    assert abs(fired / 100_000 - 0.90) <= 0.01


def test_expected_mutations_per_genome():
    rng = np.random.default_rng(5)
    counts = [mutation_mask(rng, CFG).sum() for _ in range(100_000)]
    assert abs(np.mean(counts) - 0.99) <= 0.02


def test_zero_mutation_rate_is_identity():
    rng = np.random.default_rng(6)
    g = Genome(3, tuple(np.linspace(-2, 4, 8)))
    off = dataclasses.replace(CFG, mutation_prob=0.0)
    assert all(mutate(g, rng, off) == g for _ in range(200))


def test_polynomial_mutation_stays_in_bounds():
    rng = np.random.default_rng(7)
    lo, hi = np.full(8, -2.0), np.full(8, 4.0)
    x = rng.choice([-2.0, 4.0, 1.0, -1.999999, 3.999999], size=(100_000 // 8 + 1, 8))
    for row in x:
        y = polynomial_mutation(row, lo, hi, 20.0, rng)
        assert np.all(y >= lo) and np.all(y <= hi)


def test_mutated_genomes_valid():
    rng = np.random.default_rng(8)
    always = dataclasses.replace(CFG, mutation_prob=1.0)
    for g in initial_population(CFG, rng):
        for _ in range(50):
            g = mutate(g, rng, always)
            assert g.valid(CFG)


def test_initial_population_is_latin():
    pop = initial_population(dataclasses.replace(CFG, population=20), np.random.default_rng(9))
    assert sorted(g.centroid for g in pop) == list(range(20))
    w = np.array([g.log_weights for g in pop])
    strata = np.floor((w + 2.0) / 6.0 * 20).astype(int)
    for j in range(8):
        assert sorted(strata[:, j]) == list(range(20))


def test_config_validation():
    with pytest.raises(ValueError):
        GaConfig(population=15).validate()
    with pytest.raises(ValueError):
        GaConfig(crossover_prob=1.5).validate()
    assert GaConfig.from_dict(GaConfig().to_dict()) == GaConfig()


def two_parabolas(batch):
    """Minimize (z^2, (z-2)^2) with z the first log-weight gene; front is z in [0, 2]."""
    out = []
    for ind in batch:
        z = ind.genome.log_weights[0]
        out.append(Objectives(z * z, (z - 2) ** 2, True))
    return out


def distance_to_parabola_front(f1, f2):
    z = np.linspace(0, 2, 20001)
    return float(np.min(np.hypot(z * z - f1, (z - 2) ** 2 - f2)))


def generational_distance(front):
    """Mean distance from the found front to the analytic one."""
    return float(np.mean([distance_to_parabola_front(*i.objectives.as_tuple()) for i in front]))


@pytest.mark.parametrize("seed", range(20))
def test_synthetic_front_is_recovered(seed):
    cfg = dataclasses.replace(CFG, seed=seed)
    res = evolve(cfg, two_parabolas)
    front = pareto_front(res.archive)
    assert generational_distance(front) <= 0.05
    f1 = [i.objectives.mse_total for i in front]
    f2 = [i.objectives.energy for i in front]
    assert min(f1) < 0.05 and min(f2) < 0.05
    assert len(res.archive) == cfg.population * (cfg.generations + 1)


def test_single_objective_best_is_non_increasing():
    best = []

    def hook(gen, pop, new):
        best.append(min(i.objectives.mse_total for i in pop))

    def f(batch):
        return [Objectives((i.genome.log_weights[1] - 1.0) ** 2, 1.0, True) for i in batch]

    evolve(CFG, f, on_generation=hook)
    assert len(best) == CFG.generations + 1
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_final_front_not_dominated_by_archive():
    res = evolve(CFG, two_parabolas)
    front = [i for i in res.population if i.rank == 0]
    for i in front:
        assert not any(dominates(a.objectives, i.objectives) for a in res.archive if a.objectives.feasible)


def test_evolve_is_deterministic_and_genomes_valid():
    a = evolve(CFG, two_parabolas)
    b = evolve(CFG, two_parabolas)
    assert [i.genome for i in a.archive] == [i.genome for i in b.archive]
    assert all(i.genome.valid(CFG) for i in a.archive)


def test_evaluator_failure_is_wrapped():
    def boom(batch):
        raise RuntimeError("disk full")

    with pytest.raises(EvaluatorFailure):
        evolve(CFG, boom)
    with pytest.raises(EvaluatorFailure):
        evolve(CFG, lambda batch: [])


def test_pareto_front_examples():
    one = Objectives(1.0, 2.0, True)
    bad = Objectives.penalized(FailureReason.QP_FAILURE)
    assert pareto_front([bad, one, bad]) == [one]
    with pytest.raises(EmptyFeasibleSet):
        pareto_front([bad, bad])


def test_pareto_front_matches_brute_force():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        objs = [Objectives(float(a), float(b), bool(f))
                for a, b, f in zip(rng.integers(0, 30, n), rng.integers(0, 30, n), rng.random(n) < 0.9)]
        feasible = [o for o in objs if o.feasible]
        if not feasible:
            continue
        expected = [feasible[i] for i in oracles.brute_force_nondominated([o.as_tuple() for o in feasible])]
        assert pareto_front(objs) == expected


def test_front_csv(tmp_path):
    row = {c: 0.5 for c in FRONT_COLUMNS}
    row.update(candidate_id=3, model_id=7, centroid_index=1, rank=0)
    write_front_csv(tmp_path / "f.csv", [row])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].split(",") == list(FRONT_COLUMNS)
    assert lines[1].startswith("3,7,1,0.5")
