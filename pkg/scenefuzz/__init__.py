"""Grammar-based, surrogate-guided fuzzing of driving scenarios.

This package provides tools for:
- Declaring a scenario search space as a JSON grammar with linear constraints
- Simulating the ego controller against scripted traffic in a 2D world
- Searching for unique traffic violations with a GA, a neural surrogate and
  constrained gradient mutation
- Running baseline methods and comparing campaigns statistically

Modules:
    grammar: Search-space schema parsing, sampling and normalization.
    sim: Deterministic 2D micro-simulator.
    objectives: Objective vectors and the weighted fitness.
    dedup: Uniqueness predicate and the violation archive.
    evaluation: Budgeted simulation with per-simulation run records.
    evolve: GA operators and the search loop for every method variant.
    surrogate: MLP classifier, seed ranking and gradient mutation.
    baselines: NSGA-II, decision-tree and stagnation-restart comparison methods.
    campaign: Configuration, orchestration, statistics and the CLI.
"""

from .dedup import ViolationArchive, filter_similar, is_unique
from .evolve import parse_method, run_campaign, run_search
from .grammar import SearchSpaceSchema, load_schema, parse_schema, sample
from .sim import run

__all__ = [
    "ViolationArchive",
    "filter_similar",
    "is_unique",
    "parse_method",
    "run_campaign",
    "run_search",
    "SearchSpaceSchema",
    "load_schema",
    "parse_schema",
    "sample",
    "run",
]
