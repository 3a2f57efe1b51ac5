"""Comparison methods driven through the same evaluator, archive and run log as the GA family."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..constants import (
    AVFUZZER_LOCAL_COPIES,
    AVFUZZER_LOCAL_GENERATIONS,
    AVFUZZER_POP_SIZE,
    AVFUZZER_STAGNATION_WINDOW,
    BATCH_SIZE,
    DT_MIN_IMPURITY_DECREASE,
    DT_MIN_SAMPLES_SPLIT,
    DT_OUTER_ITERS,
    PRETRAIN_BUDGET,
    REGRESSION_EPOCHS,
    REGRESSION_HIDDEN_SIZE,
)
from ..evaluation import Evaluator, Individual, SearchState
from ..evolve import GaParams, mate, polynomial_mutate, survival
from ..grammar import denormalize, is_feasible, normalize, repair, sample_many
from ..objectives import objective_triple
from ..surrogate import MlpModel, SurrogateParams, train
from .nsga2 import crowded_tournament, nondominated_sort, nsga2_survival
from .tree import DecisionTree

logger = logging.getLogger(__name__)

BASELINE_METHODS = ("NSGA2-SM", "NSGA2-UN-SM-A", "NSGA2-DT", "AV-FUZZER")


@dataclass(frozen=True)
class BaselineParams:
    regression_hidden_size: int = REGRESSION_HIDDEN_SIZE
    regression_epochs: int = REGRESSION_EPOCHS
    regression_batch_size: int = BATCH_SIZE
    pretrain_budget: int = PRETRAIN_BUDGET
    dt_outer_iters: int = DT_OUTER_ITERS
    dt_min_samples_split: float = DT_MIN_SAMPLES_SPLIT
    dt_min_impurity_decrease: float = DT_MIN_IMPURITY_DECREASE
    avfuzzer_pop_size: int = AVFUZZER_POP_SIZE
    avfuzzer_local_copies: int = AVFUZZER_LOCAL_COPIES
    avfuzzer_local_generations: int = AVFUZZER_LOCAL_GENERATIONS
    avfuzzer_stagnation_window: int = AVFUZZER_STAGNATION_WINDOW
    avfuzzer_mutation_rate: Optional[float] = None  # None means 1 / k

    def __post_init__(self) -> None:
        if self.pretrain_budget < 0 or self.dt_outer_iters < 1:
            raise ValueError("pretrain_budget must be >= 0 and dt_outer_iters >= 1")
        if self.avfuzzer_pop_size < 2 or self.avfuzzer_stagnation_window < 1:
            raise ValueError("avfuzzer_pop_size must be >= 2 and the window >= 1")


def _triples(individuals: Sequence[Individual], mode: str) -> np.ndarray:
    return np.array([objective_triple(ind.objectives, mode) for ind in individuals])


def _initial_population(
    evaluator: Evaluator, state: SearchState, pop_size: int, ga: GaParams, rng
) -> list[Individual]:
    if len(state.population) >= pop_size:
        return list(state.population[-pop_size:])
    vectors = sample_many(evaluator.schema, rng, pop_size, ga.sample_max_attempts)
    evaluated = evaluator.evaluate(vectors, state.generation)
    state.extend(evaluated)
    return evaluated


def _nsga2_select(population: Sequence[Individual], mode: str, rng):
    ranking = nondominated_sort(_triples(population, mode))

    def select(n: int) -> np.ndarray:
        return crowded_tournament(ranking, n, rng)

    return select


def _nsga2_next(population: list[Individual], offspring: list[Individual], mode: str, n: int):
    combined = population + offspring
    keep = nsga2_survival(_triples(combined, mode), min(n, len(combined)))
    return [combined[i] for i in keep]


# === NSGA2-SM / NSGA2-UN-SM-A ===


def _train_regressors(
    state: SearchState, evaluator: Evaluator, params: BaselineParams, rng
) -> list[MlpModel]:
    X = np.array([normalize(ind.vector, evaluator.schema) for ind in state.evaluated])
    Y = _triples(state.evaluated, evaluator.mode)
    sp = SurrogateParams(
        hidden_size=params.regression_hidden_size,
        epochs=params.regression_epochs,
        batch_size=params.regression_batch_size,
    )
    return [train(X, Y[:, j], rng, sp, output="linear") for j in range(Y.shape[1])]


def run_nsga2_sm(
    evaluator: Evaluator,
    rng: np.random.Generator,
    ga: Optional[GaParams] = None,
    params: Optional[BaselineParams] = None,
    *,
    incremental: bool = False,
    state: Optional[SearchState] = None,
) -> SearchState:
    """NSGA-II whose candidates are pre-ranked by one regression network per objective.

    The plain variant trains once on a pretraining sample (simulated in a separate
    ``pretrain`` stage outside the search budget, or the first population when that sample
    is empty). ``incremental`` gives the UN-SM-A variant: duplicate elimination against the
    archive and retraining every generation on all data so far.
    """
    ga = ga or GaParams()
    params = params or BaselineParams()
    state = state or SearchState()
    schema, mode = evaluator.schema, evaluator.mode
    archive = evaluator.archive if incremental else None

    if params.pretrain_budget > 0 and not evaluator.exhausted:
        with evaluator.side_stage("pretrain", params.pretrain_budget):
            vectors = sample_many(schema, rng, params.pretrain_budget, ga.sample_max_attempts)
            state.extend(evaluator.evaluate(vectors, state.generation))

    population = _initial_population(evaluator, state, ga.pop_size, ga, rng)
    models = _train_regressors(state, evaluator, params, rng) if len(state.evaluated) >= 2 else []

    start = state.generation
    while not evaluator.exhausted and state.generation - start < ga.max_gen:
        state.generation += 1
        if incremental and len(state.evaluated) >= 2:
            models = _train_regressors(state, evaluator, params, rng)
        target = ga.pop_size * ga.candidate_multiplier
        select = _nsga2_select(population, mode, rng)
        candidates = mate(population, target, schema, ga, rng, archive, select=select)
        if models:
            U = np.array([normalize(c, schema) for c in candidates])
            predicted = np.column_stack([m.forward(U) for m in models])
            keep = nsga2_survival(predicted, ga.pop_size)
            candidates = [candidates[i] for i in keep]
        else:
            candidates = candidates[: ga.pop_size]
        offspring = evaluator.evaluate(candidates, state.generation)
        state.extend(offspring)
        population = _nsga2_next(population, offspring, mode, ga.pop_size)
        logger.info(
            "%s gen %d: %d/%d simulations, %d unique violations",
            evaluator.method,
            state.generation,
            evaluator.stage_used,
            evaluator.budget,
            len(evaluator.archive),
        )
    state.population = population
    return state


# === NSGA2-DT ===


def _sample_in_leaves(tree: DecisionTree, leaves: list[int], evaluator, n, ga, rng):
    schema = evaluator.schema
    out: list[np.ndarray] = []
    for _ in range(ga.sample_max_attempts):
        if len(out) >= n:
            break
        leaf = tree.leaves[leaves[int(rng.integers(len(leaves)))]]
        v = repair(denormalize(leaf.sample(rng, 1)[0], schema), schema)
        if is_feasible(v, schema):
            out.append(v)
    if len(out) < n:
        logger.warning("critical region sampling produced %d of %d vectors", len(out), n)
    return out


def run_nsga2_dt(
    evaluator: Evaluator,
    rng: np.random.Generator,
    ga: Optional[GaParams] = None,
    params: Optional[BaselineParams] = None,
    *,
    state: Optional[SearchState] = None,
) -> SearchState:
    """Outer decision-tree loop around NSGA-II restricted to critical regions.

    Each outer iteration fits a tree on every simulation so far, then runs NSGA-II seeded from
    points inside the critical leaves; generated candidates outside them are discarded
    without simulation. The budget is split equally across outer iterations.
    """
    ga = ga or GaParams()
    params = params or BaselineParams()
    state = state or SearchState()
    schema, mode = evaluator.schema, evaluator.mode
    if not state.evaluated:
        _initial_population(evaluator, state, ga.pop_size, ga, rng)

    for outer in range(params.dt_outer_iters):
        if evaluator.exhausted:
            break
        share = evaluator.remaining // (params.dt_outer_iters - outer)
        stop_at = evaluator.stage_used + max(share, 1)

        X, y = state.training_data(schema)
        tree = DecisionTree(params.dt_min_samples_split, params.dt_min_impurity_decrease).fit(X, y)
        critical = tree.critical_leaves()
        if tree.n_leaves == 1 or not critical:
            logger.warning("decision tree did not split; the whole space is critical")
            critical = list(range(tree.n_leaves))

        def inside(v: np.ndarray, tree=tree, critical=set(critical)) -> bool:
            if tree.n_leaves == 1:
                return True
            return int(tree.apply(normalize(v, schema)[None, :])[0]) in critical

        if tree.n_leaves == 1:
            population = list(state.evaluated)
        else:
            critical_set = set(critical)
            leaf_ids = tree.apply(X)
            population = [
                ind for ind, leaf in zip(state.evaluated, leaf_ids) if leaf in critical_set
            ]
        if len(population) > ga.pop_size:
            keep = nsga2_survival(_triples(population, mode), ga.pop_size)
            population = [population[i] for i in keep]
        if len(population) < 2:
            seeds = _sample_in_leaves(tree, critical, evaluator, ga.pop_size, ga, rng)
            seeded = evaluator.evaluate(seeds, state.generation)
            state.extend(seeded)
            population += seeded
        logger.info(
            "outer iteration %d: %d leaves, %d critical, %d seeds",
            outer + 1,
            tree.n_leaves,
            len(critical),
            len(population),
        )

        while evaluator.stage_used < stop_at and not evaluator.exhausted and population:
            state.generation += 1
            select = _nsga2_select(population, mode, rng)
            candidates = mate(
                population, ga.pop_size, schema, ga, rng, select=select, accept=inside, fill=False
            )
            if len(candidates) < ga.pop_size:
                candidates += _sample_in_leaves(
                    tree, critical, evaluator, ga.pop_size - len(candidates), ga, rng
                )
            candidates = candidates[: stop_at - evaluator.stage_used]
            if not candidates:
                break
            offspring = evaluator.evaluate(candidates, state.generation)
            state.extend(offspring)
            population = _nsga2_next(population, offspring, mode, ga.pop_size)
    state.population = state.evaluated[-ga.pop_size :]
    return state


# === AV-FUZZER ===


def _fittest(individuals: list[Individual], n: int) -> list[Individual]:
    return survival(individuals, min(n, len(individuals)))


def detect_stagnation(history: Sequence[float], window: int = AVFUZZER_STAGNATION_WINDOW) -> bool:
    """True when the latest best fitness does not beat the average of the previous ``window``."""
    if len(history) <= window:
        return False
    recent = np.asarray(history[-(window + 1) : -1], dtype=float)
    return bool(history[-1] >= recent.mean())


def farthest_point_resample(
    candidates: np.ndarray, existing: np.ndarray, n: int
) -> np.ndarray:
    """Greedy max-min selection of ``n`` candidate indices away from ``existing`` points."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    n = min(n, len(candidates))
    if n <= 0:
        return np.empty(0, dtype=int)
    existing = np.asarray(existing, dtype=float).reshape(-1, candidates.shape[1])
    if len(existing):
        nearest = np.min(
            np.linalg.norm(candidates[:, None, :] - existing[None, :, :], axis=2), axis=1
        )
    else:
        nearest = np.full(len(candidates), np.inf)
    chosen: list[int] = []
    for _ in range(n):
        masked = nearest.copy()
        masked[chosen] = -np.inf
        pick = int(np.argmax(masked))
        chosen.append(pick)
        nearest = np.minimum(nearest, np.linalg.norm(candidates - candidates[pick], axis=1))
    return np.array(chosen, dtype=int)


def run_avfuzzer(
    evaluator: Evaluator,
    rng: np.random.Generator,
    ga: Optional[GaParams] = None,
    params: Optional[BaselineParams] = None,
    *,
    state: Optional[SearchState] = None,
) -> SearchState:
    """Global GA with a small population, a local GA around the best on stagnation, and
    restarts that resample the points farthest from everything simulated so far."""
    params = params or BaselineParams()
    schema = evaluator.schema
    rate = params.avfuzzer_mutation_rate or 1.0 / max(schema.dim, 1)
    ga = replace(ga or GaParams(), pop_size=params.avfuzzer_pop_size, mutation_rate=rate)
    state = state or SearchState()
    pop_size = ga.pop_size
    population = _initial_population(evaluator, state, pop_size, ga, rng)
    history: list[float] = [min(ind.fitness for ind in population)]

    while not evaluator.exhausted:
        state.generation += 1
        candidates = mate(population, pop_size, schema, ga, rng)
        offspring = evaluator.evaluate(candidates, state.generation)
        state.extend(offspring)
        if not offspring:
            break
        population = _fittest(population + offspring, pop_size)
        history.append(population[0].fitness)
        if not detect_stagnation(history, params.avfuzzer_stagnation_window):
            continue

        # local GA around mutated copies of the global best
        best = population[0]
        copies = [
            polynomial_mutate(
                best.vector, rate, ga.eta_m, rng, schema.lower, schema.upper, schema.discrete_mask
            )
            for _ in range(params.avfuzzer_local_copies)
        ]
        copies = [c if is_feasible(c, schema) else best.vector.copy() for c in copies]
        local = evaluator.evaluate(copies, state.generation)
        state.extend(local)
        local_pop = _fittest([best] + local, pop_size)
        for _ in range(params.avfuzzer_local_generations):
            if evaluator.exhausted:
                break
            state.generation += 1
            children = evaluator.evaluate(
                mate(local_pop, pop_size, schema, ga, rng), state.generation
            )
            state.extend(children)
            local_pop = _fittest(local_pop + children, pop_size)
        logger.info(
            "stagnation at gen %d; local best %.3f; restarting global search",
            state.generation,
            local_pop[0].fitness,
        )

        # restart away from everything seen so far
        pool = sample_many(schema, rng, pop_size * ga.candidate_multiplier, ga.sample_max_attempts)
        seen = np.array([normalize(ind.vector, schema) for ind in state.evaluated])
        U = np.array([normalize(v, schema) for v in pool])
        picks = farthest_point_resample(U, seen, pop_size)
        state.generation += 1
        population = evaluator.evaluate([pool[i] for i in picks], state.generation)
        state.extend(population)
        if len(population) < 2:
            break
        population = _fittest(population, pop_size)
        history = [population[0].fitness]
    state.population = population
    return state


def run_baseline(
    evaluator: Evaluator,
    method: str,
    rng: np.random.Generator,
    ga: Optional[GaParams] = None,
    params: Optional[BaselineParams] = None,
    *,
    state: Optional[SearchState] = None,
) -> SearchState:
    if method == "NSGA2-SM":
        return run_nsga2_sm(evaluator, rng, ga, params, state=state)
    if method == "NSGA2-UN-SM-A":
        return run_nsga2_sm(evaluator, rng, ga, params, incremental=True, state=state)
    if method == "NSGA2-DT":
        return run_nsga2_dt(evaluator, rng, ga, params, state=state)
    if method == "AV-FUZZER":
        return run_avfuzzer(evaluator, rng, ga, params, state=state)
    raise ValueError(f"unknown baseline {method!r}; expected one of {BASELINE_METHODS}")
