from __future__ import annotations

import numpy as np
import pytest

from scenefuzz.dedup import ViolationArchive
from scenefuzz.evaluation import Evaluator, Individual
from scenefuzz.evolve import (
    GaParams,
    mate,
    parse_method,
    polynomial_mutate,
    run_campaign,
    run_search,
    sbx_crossover,
    survival,
    tournament_select,
)
from scenefuzz.grammar import is_feasible, sample_many
from scenefuzz.surrogate import SurrogateParams

LOWER = np.zeros(6)
UPPER = np.array([1.0, 10.0, 5.0, 1.0, 100.0, 2.0])


def test_parse_method_with_perturbation_bound():
    v = parse_method("GA-UN-NN-GRAD(0.3)")
    assert (v.base, v.dedup, v.nn, v.grad) == ("GA", True, True, True)
    assert v.epsilon == pytest.approx(0.3)
    assert v.name == "GA-UN-NN-GRAD(0.3)"


def test_parse_method_plain_variants():
    random = parse_method("RANDOM")
    assert (random.base, random.dedup, random.nn, random.grad) == ("RANDOM", False, False, False)
    mixed = parse_method("RANDOM-UN-NN-GRAD")
    assert (mixed.base, mixed.dedup, mixed.nn, mixed.grad) == ("RANDOM", True, True, True)
    assert parse_method("GA-UN").epsilon == 1.0


@pytest.mark.parametrize(
    "name, message",
    [
        ("GA-XX", "unknown method"),
        ("GA(0.5)", "only GRAD methods"),
        ("GA-UN-NN-GRAD(1.5)", r"\(0, 1\]"),
    ],
)
def test_parse_method_errors(name, message):
    with pytest.raises(ValueError, match=message):
        parse_method(name)


def test_default_mutation_rate_scales_with_dimension():
    params = GaParams()
    assert params.rate_for(23) == pytest.approx(5.0 / 23)
    assert params.rate_for(3) == 1.0
    assert GaParams(mutation_rate=0.2).rate_for(23) == 0.2


@pytest.mark.parametrize(
    "kwargs", [{"pop_size": 1}, {"p_crossover": 0.0}, {"mutation_rate": 1.5}, {"eta_m": 0.0}]
)
def test_ga_params_validation(kwargs):
    with pytest.raises(ValueError):
        GaParams(**kwargs)


def test_tournament_returns_valid_indices_and_keeps_the_best(rng):
    fit = np.array([5.0, 1.0, 3.0, 4.0, 2.0])
    winners = tournament_select(fit, 5, rng)
    assert winners.shape == (5,)
    assert set(winners.tolist()) <= set(range(5))
    # the best wins both of its first-round bouts
    assert 1 in winners.tolist()
    with pytest.raises(ValueError):
        tournament_select([], 2, rng)


def test_sbx_keeps_children_in_bounds(rng):
    for _ in range(200):
        a = rng.uniform(LOWER, UPPER)
        b = rng.uniform(LOWER, UPPER)
        c1, c2 = sbx_crossover(a, b, 5.0, 1.0, rng, LOWER, UPPER)
        assert np.all((c1 >= LOWER) & (c1 <= UPPER))
        assert np.all((c2 >= LOWER) & (c2 <= UPPER))


def test_sbx_of_identical_parents_is_identity(rng):
    a = rng.uniform(LOWER, UPPER)
    c1, c2 = sbx_crossover(a, a.copy(), 5.0, 1.0, rng, LOWER, UPPER)
    np.testing.assert_array_equal(c1, a)
    np.testing.assert_array_equal(c2, a)


def test_sbx_without_crossover_returns_parents(rng):
    a, b = rng.uniform(LOWER, UPPER), rng.uniform(LOWER, UPPER)
    c1, c2 = sbx_crossover(a, b, 5.0, 0.0, rng, LOWER, UPPER)
    np.testing.assert_array_equal(c1, a)
    np.testing.assert_array_equal(c2, b)


def test_mutation_stays_in_bounds_and_rounds_discrete_fields(rng):
    discrete = np.array([False, True, False, False, True, False])
    for _ in range(200):
        v = rng.uniform(LOWER, UPPER)
        v[discrete] = np.round(v[discrete])
        out = polynomial_mutate(v, 0.5, 5.0, rng, LOWER, UPPER, discrete)
        assert np.all((out >= LOWER) & (out <= UPPER))
        np.testing.assert_array_equal(out[discrete], np.round(out[discrete]))


def test_mutation_frequency_follows_the_rate(rng):
    k = 4000
    lower, upper = np.zeros(k), np.ones(k)
    v = np.full(k, 0.5)
    out = polynomial_mutate(v, 0.2, 5.0, rng, lower, upper)
    assert np.mean(out != v) == pytest.approx(0.2, abs=0.03)
    np.testing.assert_array_equal(polynomial_mutate(v, 0.0, 5.0, rng, lower, upper), v)


def test_survival_keeps_the_lowest_fitness_in_stable_order():
    inds = [Individual(np.array([float(i)]), fitness=f) for i, f in enumerate([3, 1, 2, 1])]
    kept = survival(inds, 3)
    assert [int(ind.vector[0]) for ind in kept] == [1, 3, 2]
    with pytest.raises(ValueError):
        survival(inds, 5)


def test_mate_produces_feasible_offspring(listing_schema, rng):
    vectors = sample_many(listing_schema, rng, 6)
    population = [Individual(v, fitness=float(f)) for v, f in zip(vectors, rng.random(6))]
    archive = ViolationArchive(listing_schema)
    children = mate(population, 10, listing_schema, GaParams(pop_size=6), rng, archive)
    assert len(children) == 10
    assert all(is_feasible(c, listing_schema) for c in children)


def test_random_campaign_spends_exactly_the_budget(obstacle_schema):
    archive, evaluator = run_campaign(obstacle_schema, "RANDOM", 12, rng_seed=3)
    assert evaluator.used == 12
    assert [r.index for r in evaluator.records] == list(range(12))
    assert all(r.stage == "search" and r.method == "RANDOM" for r in evaluator.records)
    assert sum(r.unique_flag for r in evaluator.records) == len(archive)
    assert all(r.violation_kind is not None for r in evaluator.records if r.unique_flag)


def test_campaign_is_deterministic_per_seed(obstacle_schema):
    params = GaParams(pop_size=4)
    _, first = run_campaign(obstacle_schema, "GA-UN", 10, rng_seed=5, params=params)
    _, second = run_campaign(obstacle_schema, "GA-UN", 10, rng_seed=5, params=params)
    assert [r.vector for r in first.records] == [r.vector for r in second.records]
    assert [r.fitness for r in first.records] == [r.fitness for r in second.records]


def test_ga_stops_mid_generation_when_the_budget_runs_out(obstacle_schema):
    _, evaluator = run_campaign(obstacle_schema, "GA", 10, params=GaParams(pop_size=4))
    assert evaluator.used == 10
    assert evaluator.exhausted
    assert max(r.generation for r in evaluator.records) == 2


def test_surrogate_variant_runs_within_budget(obstacle_schema):
    params = GaParams(pop_size=4, generation_to_use_nn=1, candidate_multiplier=3)
    surrogate = SurrogateParams(hidden_size=8, epochs=5, batch_size=4)
    with Evaluator(obstacle_schema, 16, method="GA-UN-NN-GRAD(0.5)") as evaluator:
        state = run_search(
            evaluator,
            "GA-UN-NN-GRAD(0.5)",
            np.random.default_rng(0),
            params,
            surrogate_params=surrogate,
            grad_kwargs={"n": 10},
        )
    assert evaluator.used == 16
    assert len(state.evaluated) == 16
    assert len(state.population) == 4
    assert all(is_feasible(np.asarray(r.vector), obstacle_schema) for r in evaluator.records)
