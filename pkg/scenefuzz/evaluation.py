"""Simulation budget, objective evaluation and the per-simulation run log."""

from __future__ import annotations

import logging
import multiprocessing
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence

import numpy as np

from .dedup import UniquenessParams, ViolationArchive
from .grammar import SearchSpaceSchema, normalize
from .objectives import FitnessWeights, ObjectiveVector, compute_objectives, fitness
from .sim.kernel import SimConfig, run
from .sim.maps import load_map

logger = logging.getLogger(__name__)


@dataclass
class Individual:
    vector: np.ndarray
    objectives: Optional[ObjectiveVector] = None
    fitness: Optional[float] = None
    sim_index: int = -1

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None

    @property
    def violation_kind(self) -> Optional[str]:
        return None if self.objectives is None else self.objectives.violation_kind


@dataclass
class RunRecord:
    """One line of the run log; one record per simulation."""

    generation: int
    index: int
    vector: list[float]
    normalized_vector: list[float]
    objectives: dict[str, Any]
    fitness: float
    violation_kind: Optional[str]
    unique_flag: bool
    wall_time_ms: float = 0.0
    stage: str = "search"
    method: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "generation": self.generation,
            "index": self.index,
            "vector": self.vector,
            "normalized_vector": self.normalized_vector,
            "objectives": self.objectives,
            "fitness": self.fitness,
            "violation_kind": self.violation_kind,
            "unique_flag": self.unique_flag,
            "wall_time_ms": self.wall_time_ms,
            "stage": self.stage,
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        return cls(
            generation=int(data["generation"]),
            index=int(data["index"]),
            vector=[float(x) for x in data["vector"]],
            normalized_vector=[float(x) for x in data["normalized_vector"]],
            objectives=dict(data["objectives"]),
            fitness=float(data["fitness"]),
            violation_kind=data["violation_kind"],
            unique_flag=bool(data["unique_flag"]),
            wall_time_ms=float(data.get("wall_time_ms", 0.0)),
            stage=data.get("stage", "search"),
            method=data.get("method", ""),
        )


@dataclass(frozen=True)
class _Job:
    schema: SearchSpaceSchema
    vector: np.ndarray
    cfg: SimConfig
    wronglane_metric: str
    object_metric: str


def _simulate(job: _Job) -> tuple[ObjectiveVector, float]:
    start = time.perf_counter()
    outcome = run(job.schema, job.vector, cfg=job.cfg)
    road_map = load_map(job.schema.map_id, job.schema.ego_route, job.cfg.map_resolution)
    obj = compute_objectives(
        outcome,
        road_map,
        wronglane_metric=job.wronglane_metric,
        object_metric=job.object_metric,
        fov_half_angle=job.cfg.fov_half_angle,
    )
    return obj, (time.perf_counter() - start) * 1000.0


@dataclass
class Evaluator:
    """Runs simulations against a per-stage budget and merges results in candidate order.

    Every simulated vector gets a ``RunRecord``; violations go through the archive, so the
    archive only ever holds unique ones regardless of the search method.
    """

    schema: SearchSpaceSchema
    budget: int
    mode: str = "collision"
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    sim_config: SimConfig = field(default_factory=SimConfig)
    uniqueness: UniquenessParams = field(default_factory=UniquenessParams)
    method: str = ""
    stage: str = "search"
    workers: int = 1
    wronglane_metric: str = "distance"
    object_metric: str = "box"
    log_wall_time: bool = False
    archive: Optional[ViolationArchive] = None
    records: list[RunRecord] = field(default_factory=list)
    stage_used: int = 0
    _pool: Any = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.archive is None:
            self.archive = ViolationArchive(self.schema, self.uniqueness)
        # fail fast on a route that leaves the road
        load_map(self.schema.map_id, self.schema.ego_route, self.sim_config.map_resolution)

    # === Budget ===

    @property
    def used(self) -> int:
        return len(self.records)

    @property
    def remaining(self) -> int:
        return max(0, self.budget - self.stage_used)

    @property
    def exhausted(self) -> bool:
        return self.remaining == 0

    def begin_stage(self, stage: str, budget: int, method: Optional[str] = None) -> None:
        """Start a new accounting stage with its own simulation budget."""
        self.stage = stage
        self.budget = int(budget)
        self.stage_used = 0
        if method is not None:
            self.method = method
        logger.info("stage %s: %s with %d simulations", stage, self.method, budget)

    @contextmanager
    def side_stage(self, stage: str, budget: int) -> Iterator["Evaluator"]:
        """Spend simulations outside the current stage budget, then resume it."""
        saved = (self.stage, self.budget, self.stage_used)
        self.begin_stage(stage, budget)
        try:
            yield self
        finally:
            self.stage, self.budget, self.stage_used = saved

    # === Evaluation ===

    def _run_all(self, vectors: Sequence[np.ndarray]) -> list[tuple[ObjectiveVector, float]]:
        jobs = [
            _Job(self.schema, v, self.sim_config, self.wronglane_metric, self.object_metric)
            for v in vectors
        ]
        if self.workers <= 1 or len(jobs) < 2:
            return [_simulate(job) for job in jobs]
        if self._pool is None:
            self._pool = multiprocessing.get_context("spawn").Pool(self.workers)
        # imap keeps candidate order whatever the worker count
        return list(self._pool.imap(_simulate, jobs))

    def evaluate(self, vectors: Sequence[np.ndarray], generation: int = 0) -> list[Individual]:
        """Simulate up to the remaining budget; excess vectors are dropped unevaluated."""
        vectors = [np.asarray(v, dtype=float) for v in vectors][: self.remaining]
        results = []
        for v, (obj, wall_ms) in zip(vectors, self._run_all(vectors)):
            index = self.used
            fit = fitness(obj, self.weights, self.mode)
            unique = False
            if obj.violation_kind is not None:
                unique = self.archive.add(
                    v, obj.violation_kind, obj, generation, index, self.stage
                )
            self.records.append(
                RunRecord(
                    generation=generation,
                    index=index,
                    vector=[float(x) for x in v],
                    normalized_vector=[float(x) for x in normalize(v, self.schema)],
                    objectives=obj.to_dict(),
                    fitness=fit,
                    violation_kind=obj.violation_kind,
                    unique_flag=unique,
                    wall_time_ms=round(wall_ms, 3) if self.log_wall_time else 0.0,
                    stage=self.stage,
                    method=self.method,
                )
            )
            self.stage_used += 1
            results.append(Individual(v, obj, fit, index))
        return results

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class SearchState:
    """Everything one stage hands to the next: evaluated data and the current population."""

    evaluated: list[Individual] = field(default_factory=list)
    population: list[Individual] = field(default_factory=list)
    generation: int = 0

    def extend(self, individuals: Sequence[Individual]) -> None:
        self.evaluated.extend(individuals)

    def training_data(self, schema: SearchSpaceSchema) -> tuple[np.ndarray, np.ndarray]:
        """Normalized vectors with 1 for any violation and 0 otherwise."""
        if not self.evaluated:
            return np.empty((0, schema.dim)), np.empty(0)
        X = np.array([normalize(ind.vector, schema) for ind in self.evaluated])
        y = np.array([float(ind.violation_kind is not None) for ind in self.evaluated])
        return X, y
