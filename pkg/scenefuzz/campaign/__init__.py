"""Campaign layer: configuration, orchestration, run logs, statistics and the CLI.

Modules:
    config: ``CampaignConfig`` and its JSON loader.
    runner: Seed collection plus one search method per repetition.
    runlog: Run directories (``runlog.jsonl``, ``archive.json``, ``meta.json``).
    stats: Unique-violation counts, rank-sum p-values and A12 effect sizes.
    report: Counts-vs-simulations curves as CSV and PNG.
    cli: The ``scenefuzz`` command (run / compare / replay / report / sweep-thresholds).

Usage:
    scenefuzz run --schema scenarios/turning_right_leading_car.json --method GA-UN --budget 200
    scenefuzz compare runs/ga-un runs/random

    # Or from Python:
    from scenefuzz.campaign import load_config, run_experiment
    run_experiment(load_config("configs/default.json"), "runs/default")
"""

from .cli import main
from .config import CampaignConfig, ConfigError, load_config, parse_config, with_overrides
from .report import plot_curves, write_curves_csv
from .runlog import LogError, find_runs, load_run, read_runlog, save_run
from .runner import run_experiment, run_repetition
from .stats import (
    StatsReport,
    compare_methods,
    unique_count,
    unique_curve,
    unique_percentage,
    vargha_delaney_a12,
    wilcoxon_rank_sum,
)

__all__ = [
    "main",
    "CampaignConfig",
    "ConfigError",
    "load_config",
    "parse_config",
    "with_overrides",
    "plot_curves",
    "write_curves_csv",
    "LogError",
    "find_runs",
    "load_run",
    "read_runlog",
    "save_run",
    "run_experiment",
    "run_repetition",
    "StatsReport",
    "compare_methods",
    "unique_count",
    "unique_curve",
    "unique_percentage",
    "vargha_delaney_a12",
    "wilcoxon_rank_sum",
]
