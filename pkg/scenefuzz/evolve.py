"""Genetic search with optional dedup, surrogate ranking and gradient mutation.

Method names combine a base search with optional stages:

    RANDOM              independent samples
    GA                  tournament selection, SBX crossover, polynomial mutation
    GA-UN               GA whose offspring must differ from archived violations and each other
    GA-UN-NN            GA-UN whose candidates are ranked by a violation classifier
    GA-UN-NN-GRAD       GA-UN-NN plus constrained gradient mutation of the selected candidates
    RANDOM-UN-NN-GRAD   sampled candidates through the same dedup / rank / mutate pipeline

GRAD methods take an optional perturbation bound, e.g. ``GA-UN-NN-GRAD(0.3)``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .constants import (
    CANDIDATE_MULTIPLIER,
    ETA_CROSSOVER,
    ETA_MUTATION,
    GENERATION_TO_USE_NN,
    GRAD_EPSILON,
    MAX_GEN,
    MAX_MATING_ITER,
    MUTATION_RATE_FACTOR,
    P_CROSSOVER,
    POP_SIZE,
    SAMPLE_MAX_ATTEMPTS,
)
from .dedup import ViolationArchive, filter_similar
from .evaluation import Evaluator, Individual, SearchState
from .grammar import (
    SearchSpaceSchema,
    denormalize,
    is_feasible,
    normalize,
    repair,
    sample_many,
)
from .surrogate import (
    GradMutationParams,
    MlpModel,
    SurrogateParams,
    compute_th_conf1,
    gradient_mutate,
    rank_and_select,
    train,
)

logger = logging.getLogger(__name__)

METHODS = ("RANDOM", "GA", "GA-UN", "GA-UN-NN", "GA-UN-NN-GRAD", "RANDOM-UN-NN-GRAD")
_METHOD_PATTERN = re.compile(r"^([A-Z\-]+?)(?:\(([0-9.eE+\-]+)\))?$")


@dataclass(frozen=True)
class Variant:
    name: str
    base: str
    dedup: bool
    nn: bool
    grad: bool
    epsilon: float = GRAD_EPSILON


def parse_method(name: str) -> Variant:
    """Split a method name such as ``GA-UN-NN-GRAD(0.3)`` into its stages."""
    match = _METHOD_PATTERN.match(name.strip())
    if match is None or match.group(1) not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    stem, eps = match.group(1), match.group(2)
    grad = stem.endswith("GRAD")
    if eps is not None and not grad:
        raise ValueError(f"{name}: only GRAD methods take a perturbation bound")
    epsilon = float(eps) if eps is not None else GRAD_EPSILON
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"{name}: perturbation bound must be in (0, 1]")
    parts = stem.split("-")
    return Variant(name, parts[0], "UN" in parts, "NN" in parts, grad, epsilon)


@dataclass(frozen=True)
class GaParams:
    pop_size: int = POP_SIZE
    max_gen: int = MAX_GEN
    eta_crossover: float = ETA_CROSSOVER
    p_crossover: float = P_CROSSOVER
    mutation_rate: Optional[float] = None  # None means MUTATION_RATE_FACTOR / k
    eta_m: float = ETA_MUTATION
    candidate_multiplier: int = CANDIDATE_MULTIPLIER
    max_mating_iter: int = MAX_MATING_ITER
    generation_to_use_nn: float = GENERATION_TO_USE_NN
    sample_max_attempts: int = SAMPLE_MAX_ATTEMPTS

    def __post_init__(self) -> None:
        if self.pop_size < 2:
            raise ValueError("pop_size must be >= 2")
        if self.max_gen < 0 or self.candidate_multiplier < 1 or self.max_mating_iter < 1:
            raise ValueError("max_gen, candidate_multiplier and max_mating_iter out of range")
        if not 0.0 < self.p_crossover <= 1.0:
            raise ValueError("p_crossover must be in (0, 1]")
        if self.mutation_rate is not None and not 0.0 < self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in (0, 1]")
        if not (self.eta_crossover > 0 and self.eta_m > 0):
            raise ValueError("eta values must be > 0")

    def rate_for(self, k: int) -> float:
        if self.mutation_rate is not None:
            return self.mutation_rate
        return min(1.0, MUTATION_RATE_FACTOR / max(k, 1))


# === Operators ===


def tournament_select(fitnesses: Sequence[float], n: int, rng: np.random.Generator) -> np.ndarray:
    """Binary tournament with replacement: each individual enters twice per round.

    Returns ``n`` winner indices; the lower fitness wins and ties go to the first entrant.
    """
    fit = np.asarray(fitnesses, dtype=float)
    if fit.size == 0:
        raise ValueError("cannot select from an empty population")
    winners: list[int] = []
    while len(winners) < n:
        pool = np.concatenate([rng.permutation(fit.size), rng.permutation(fit.size)])
        a, b = pool[0::2], pool[1::2]
        winners.extend(np.where(fit[b] < fit[a], b, a).tolist())
    return np.array(winners[:n], dtype=int)


def sbx_crossover(
    a: np.ndarray,
    b: np.ndarray,
    eta: float,
    p: float,
    rng: np.random.Generator,
    lower: np.ndarray,
    upper: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Bounded simulated binary crossover; the first child stays on the side of ``a``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = a.size
    do = rng.random(k) < p
    u = rng.random(k)
    c1, c2 = a.copy(), b.copy()

    y1, y2 = np.minimum(a, b), np.maximum(a, b)
    gap = y2 - y1
    active = do & (gap > 1e-14) & (upper > lower)
    if not active.any():
        return c1, c2

    def _betaq(beta: np.ndarray) -> np.ndarray:
        alpha = 2.0 - beta ** -(eta + 1.0)
        ua = u * alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            low = ua ** (1.0 / (eta + 1.0))
            high = (1.0 / (2.0 - ua)) ** (1.0 / (eta + 1.0))
        return np.where(u <= 1.0 / alpha, low, high)

    safe_gap = np.where(active, gap, 1.0)
    lo_child = 0.5 * (y1 + y2 - _betaq(1.0 + 2.0 * (y1 - lower) / safe_gap) * gap)
    hi_child = 0.5 * (y1 + y2 + _betaq(1.0 + 2.0 * (upper - y2) / safe_gap) * gap)
    lo_child = np.clip(lo_child, lower, upper)
    hi_child = np.clip(hi_child, lower, upper)

    a_low = a <= b
    c1 = np.where(active, np.where(a_low, lo_child, hi_child), a)
    c2 = np.where(active, np.where(a_low, hi_child, lo_child), b)
    return c1, c2


def polynomial_mutate(
    v: np.ndarray,
    rate: float,
    eta_m: float,
    rng: np.random.Generator,
    lower: np.ndarray,
    upper: np.ndarray,
    discrete_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Deb's bounded polynomial mutation, each field independently with probability ``rate``."""
    v = np.asarray(v, dtype=float)
    k = v.size
    do = rng.random(k) < rate
    u = rng.random(k)
    span = upper - lower
    active = do & (span > 0)
    out = v.copy()
    if active.any():
        safe = np.where(span > 0, span, 1.0)
        d1 = (v - lower) / safe
        d2 = (upper - v) / safe
        power = 1.0 / (eta_m + 1.0)
        with np.errstate(invalid="ignore"):
            left = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_m + 1.0)) ** power - 1.0
            right = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_m + 1.0)) ** power
        delta = np.where(u <= 0.5, left, right)
        out = np.where(active, v + delta * span, v)
    if discrete_mask is not None:
        out[discrete_mask] = np.round(out[discrete_mask])
    return np.clip(out, lower, upper)


def survival(individuals: Sequence[Individual], pop_size: int) -> list[Individual]:
    """The ``pop_size`` lowest-fitness individuals; ties keep insertion order."""
    if len(individuals) < pop_size:
        raise ValueError(f"need >= {pop_size} individuals, got {len(individuals)}")
    order = np.argsort([ind.fitness for ind in individuals], kind="stable")
    return [individuals[i] for i in order[:pop_size]]


# === Candidate generation ===


def _sample_candidates(
    schema: SearchSpaceSchema,
    n: int,
    rng: np.random.Generator,
    params: GaParams,
    archive: Optional[ViolationArchive],
    pending: list[np.ndarray],
) -> list[np.ndarray]:
    fresh = list(sample_many(schema, rng, n, params.sample_max_attempts))
    if archive is None:
        return fresh
    keep = filter_similar(fresh, archive, pending)
    if len(keep) < len(fresh):
        logger.debug("dedup dropped %d of %d sampled candidates", len(fresh) - len(keep), n)
    return [fresh[i] for i in keep]


def mate(
    population: Sequence[Individual],
    target: int,
    schema: SearchSpaceSchema,
    params: GaParams,
    rng: np.random.Generator,
    archive: Optional[ViolationArchive] = None,
    *,
    select: Optional[Callable[[int], np.ndarray]] = None,
    rate: Optional[float] = None,
    accept: Optional[Callable[[np.ndarray], bool]] = None,
    fill: bool = True,
) -> list[np.ndarray]:
    """Breed ``target`` feasible offspring; ``archive`` enables duplicate elimination.

    ``select(n)`` returns ``n`` parent indices (fitness tournament by default) and children
    failing ``accept`` are dropped. After ``max_mating_iter`` rounds any shortfall is topped
    up by fresh sampling unless ``fill`` is off.
    """
    lower, upper, discrete = schema.lower, schema.upper, schema.discrete_mask
    rate = params.rate_for(schema.dim) if rate is None else rate
    if select is None:
        fit = [ind.fitness for ind in population]

        def select(n: int) -> np.ndarray:
            return tournament_select(fit, n, rng)

    offspring: list[np.ndarray] = []
    for _ in range(params.max_mating_iter):
        need = target - len(offspring)
        parents = select(2 * math.ceil(need / 2))
        children = []
        for i, j in zip(parents[0::2], parents[1::2]):
            pair = sbx_crossover(
                population[i].vector,
                population[j].vector,
                params.eta_crossover,
                params.p_crossover,
                rng,
                lower,
                upper,
            )
            for child in pair:
                child = polynomial_mutate(child, rate, params.eta_m, rng, lower, upper, discrete)
                if is_feasible(child, schema) and (accept is None or accept(child)):
                    children.append(child)
        if archive is not None:
            children = [children[i] for i in filter_similar(children, archive, offspring)]
        offspring.extend(children[: target - len(offspring)])
        if len(offspring) >= target:
            return offspring

    if not fill:
        return offspring
    shortfall = target - len(offspring)
    logger.info("mating produced %d of %d candidates; sampling the rest", len(offspring), target)
    top_up = _sample_candidates(schema, shortfall, rng, params, archive, offspring)
    if len(top_up) < shortfall:
        # the archive rejected some samples; fill with plain ones so the count holds
        logger.warning("dedup left %d of %d top-up samples", len(top_up), shortfall)
        extra = sample_many(schema, rng, shortfall - len(top_up), params.sample_max_attempts)
        top_up += list(extra)
    return offspring + top_up


# === Surrogate stage ===


def _select_with_surrogate(
    candidates: list[np.ndarray],
    pop_size: int,
    state: SearchState,
    evaluator: Evaluator,
    variant: Variant,
    surrogate_params: SurrogateParams,
    grad_kwargs: dict,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    schema = evaluator.schema
    X, y = state.training_data(schema)
    if len(X) < 2:
        return candidates[:pop_size]
    model = train(X, y, rng, surrogate_params)
    if model.degenerate:
        logger.warning("single-class training data; keeping candidates in generation order")
        return candidates[:pop_size]

    U = np.array([normalize(c, schema) for c in candidates])
    chosen = rank_and_select(model, U, min(pop_size, len(candidates)))
    selected = [candidates[i] for i in chosen]
    if not variant.grad:
        return selected
    return _gradient_stage(selected, model, X, y, evaluator, variant, grad_kwargs)


def _gradient_stage(
    selected: list[np.ndarray],
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    evaluator: Evaluator,
    variant: Variant,
    grad_kwargs: dict,
) -> list[np.ndarray]:
    schema = evaluator.schema
    th_conf1 = compute_th_conf1(model.forward(X), float(y.mean()))
    params = GradMutationParams.for_schema(
        schema, th_conf1=th_conf1, epsilon=variant.epsilon, **grad_kwargs
    )
    out = []
    reverted = 0
    for v in selected:
        u = gradient_mutate(normalize(v, schema), model, params, evaluator.archive, schema)
        mutated = repair(denormalize(u, schema), schema)
        if is_feasible(mutated, schema):
            out.append(mutated)
        else:
            # rounding discrete fields can step over a constraint boundary
            reverted += 1
            out.append(v)
    if reverted:
        logger.debug("%d gradient-mutated candidates reverted after rounding", reverted)
    return out


# === Search loop ===


def _log_generation(evaluator: Evaluator, generation: int) -> None:
    logger.info(
        "%s gen %d: %d/%d simulations, %d unique violations",
        evaluator.method,
        generation,
        evaluator.stage_used,
        evaluator.budget,
        len(evaluator.archive),
    )


def run_search(
    evaluator: Evaluator,
    method: str,
    rng: np.random.Generator,
    params: Optional[GaParams] = None,
    *,
    surrogate_params: Optional[SurrogateParams] = None,
    grad_kwargs: Optional[dict] = None,
    state: Optional[SearchState] = None,
) -> SearchState:
    """Spend the evaluator's remaining stage budget on one method.

    Args:
        evaluator: Owns the simulator, the archive, the run log and the budget.
        method: One of ``METHODS``, GRAD methods optionally with ``(epsilon)``.
        rng: The only source of randomness.
        params: GA settings.
        surrogate_params: Classifier size and optimizer settings.
        grad_kwargs: Extra ``GradMutationParams`` fields such as ``th_conf2`` or ``n``.
        state: Data and population carried over from an earlier stage.

    Returns:
        The state after the last generation, ready to hand to another stage.
    """
    variant = parse_method(method)
    params = params or GaParams()
    surrogate_params = surrogate_params or SurrogateParams()
    grad_kwargs = grad_kwargs or {}
    state = state or SearchState()
    schema = evaluator.schema
    archive = evaluator.archive if variant.dedup else None

    if variant.base == "GA" and len(state.population) < params.pop_size:
        initial = list(sample_many(schema, rng, params.pop_size, params.sample_max_attempts))
        evaluated = evaluator.evaluate(initial, state.generation)
        state.extend(evaluated)
        state.population = evaluated
        _log_generation(evaluator, state.generation)

    start = state.generation
    while not evaluator.exhausted and state.generation - start < params.max_gen:
        state.generation += 1
        use_nn = variant.nn and state.generation > params.generation_to_use_nn
        target = params.pop_size * (params.candidate_multiplier if use_nn else 1)

        if variant.base == "GA":
            candidates = mate(state.population, target, schema, params, rng, archive)
        else:
            candidates = _sample_candidates(schema, target, rng, params, archive, [])
            if not candidates:
                candidates = list(sample_many(schema, rng, target, params.sample_max_attempts))

        if use_nn:
            candidates = _select_with_surrogate(
                candidates,
                params.pop_size,
                state,
                evaluator,
                variant,
                surrogate_params,
                grad_kwargs,
                rng,
            )
        else:
            candidates = candidates[: params.pop_size]

        offspring = evaluator.evaluate(candidates, state.generation)
        state.extend(offspring)
        if variant.base == "GA" and offspring:
            combined = state.population + offspring
            state.population = survival(combined, min(params.pop_size, len(combined)))
        _log_generation(evaluator, state.generation)
    return state


def run_campaign(
    schema: SearchSpaceSchema,
    method: str,
    budget: int,
    rng_seed: int = 0,
    params: Optional[GaParams] = None,
    **evaluator_kwargs,
) -> tuple[ViolationArchive, Evaluator]:
    """Single-stage convenience wrapper: one method, one budget, a fresh archive."""
    rng = np.random.default_rng(rng_seed)
    with Evaluator(schema, budget, method=method, **evaluator_kwargs) as evaluator:
        run_search(evaluator, method, rng, params)
    return evaluator.archive, evaluator
