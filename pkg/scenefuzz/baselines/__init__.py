"""Comparison methods for fuzzing campaigns.

Modules:
    nsga2: Non-dominated sorting, crowding distance and NSGA-II survival.
    tree: Gini decision tree whose leaves mark critical regions of the search space.
    methods: NSGA2-SM, NSGA2-UN-SM-A, NSGA2-DT and AV-FUZZER search loops.

Usage:
    from scenefuzz.baselines import run_baseline

    state = run_baseline(evaluator, "NSGA2-DT", rng)
"""

from .methods import (
    BASELINE_METHODS,
    BaselineParams,
    detect_stagnation,
    farthest_point_resample,
    run_avfuzzer,
    run_baseline,
    run_nsga2_dt,
    run_nsga2_sm,
)
from .nsga2 import ParetoRanking, crowding_distance, nondominated_sort, nsga2_survival
from .tree import DecisionTree, Leaf

__all__ = [
    "BASELINE_METHODS",
    "BaselineParams",
    "detect_stagnation",
    "farthest_point_resample",
    "run_avfuzzer",
    "run_baseline",
    "run_nsga2_dt",
    "run_nsga2_sm",
    "ParetoRanking",
    "crowding_distance",
    "nondominated_sort",
    "nsga2_survival",
    "DecisionTree",
    "Leaf",
]
