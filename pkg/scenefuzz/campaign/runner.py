"""Campaign orchestration: seed collection, the search stage and one directory per repetition."""

from __future__ import annotations

import json
import logging
import multiprocessing
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..baselines.methods import BASELINE_METHODS, run_baseline
from ..dedup import UniquenessParams
from ..evaluation import Evaluator, SearchState
from ..evolve import run_search
from ..grammar import SearchSpaceSchema, load_schema
from ..objectives import FitnessWeights
from .config import CampaignConfig, ConfigError
from .runlog import CONFIG_NAME, save_run

logger = logging.getLogger(__name__)


def _schema(config: CampaignConfig) -> SearchSpaceSchema:
    if not config.schema_path:
        raise ConfigError("schema_path must be given in the config or with --schema")
    return load_schema(config.schema_path)


def make_evaluator(config: CampaignConfig, schema: SearchSpaceSchema) -> Evaluator:
    return Evaluator(
        schema,
        budget=0,
        mode=config.violation_mode,
        weights=FitnessWeights(config.weights),
        sim_config=config.simulation,
        uniqueness=UniquenessParams(config.th1, config.th2),
        workers=config.workers,
        wronglane_metric=config.wronglane_metric,
        object_metric=config.object_metric,
        log_wall_time=config.log_wall_time,
    )


def run_repetition(
    config: CampaignConfig, rep: int, schema: Optional[SearchSpaceSchema] = None
) -> Evaluator:
    """Seed collection (if budgeted) followed by the configured method, with one RNG."""
    schema = schema or _schema(config)
    rng = np.random.default_rng([config.rng_seed, rep])
    grad_kwargs = {
        "th_conf2": config.gradient.th_conf2,
        "n": config.gradient.n,
        "lam": config.gradient.lam,
        "stop_on_drop": config.gradient.stop_on_drop,
    }
    with make_evaluator(config, schema) as evaluator:
        state = SearchState()
        seed = config.seed_collection
        if seed.budget > 0:
            evaluator.begin_stage("seed", seed.budget, seed.method)
            state = run_search(
                evaluator,
                seed.method,
                rng,
                config.ga,
                surrogate_params=config.surrogate,
                grad_kwargs=grad_kwargs,
                state=state,
            )

        evaluator.begin_stage("search", config.budget, config.method)
        if config.method in BASELINE_METHODS:
            run_baseline(evaluator, config.method, rng, config.ga, config.baselines, state=state)
        else:
            run_search(
                evaluator,
                config.method,
                rng,
                config.ga,
                surrogate_params=config.surrogate,
                grad_kwargs=grad_kwargs,
                state=state,
            )
    logger.info(
        "rep %d of %s: %d simulations, %d unique violations",
        rep,
        config.method,
        evaluator.used,
        len(evaluator.archive),
    )
    return evaluator


def _run_and_save(args: tuple[CampaignConfig, int, str]) -> str:
    config, rep, out_dir = args
    evaluator = run_repetition(config, rep)
    meta = {
        "method": config.method,
        "rep": rep,
        "rng_seed": config.rng_seed,
        "schema_path": config.schema_path,
        "violation_mode": config.violation_mode,
        "th1": config.th1,
        "th2": config.th2,
        "accounting": config.accounting,
        "wronglane_metric": config.wronglane_metric,
        "object_metric": config.object_metric,
        "simulation": config.simulation.to_dict(),
        "simulations": evaluator.used,
        "unique_violations": len(evaluator.archive),
    }
    return str(save_run(evaluator, Path(out_dir) / f"rep_{rep}", meta))


def run_experiment(config: CampaignConfig, out_dir: str | Path) -> list[Path]:
    """Run every repetition into ``out_dir/rep_<i>`` and write the resolved config."""
    _schema(config)
    config = replace(config, schema_path=str(Path(config.schema_path).resolve()))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_NAME).write_text(json.dumps(config.to_dict(), indent=1), encoding="utf-8")

    parallel = config.rep_workers > 1 and config.repetitions > 1
    if parallel and config.workers > 1:
        # pool workers are daemonic and cannot own a simulation pool
        logger.warning("rep_workers > 1: simulating with one worker per repetition")
        config = replace(config, workers=1)
    jobs = [(config, rep, str(out_dir)) for rep in range(config.repetitions)]
    if parallel:
        # repetitions write disjoint directories
        with multiprocessing.get_context("spawn").Pool(config.rep_workers) as pool:
            paths = pool.map(_run_and_save, jobs)
    else:
        paths = [_run_and_save(job) for job in jobs]
    return [Path(p) for p in paths]
