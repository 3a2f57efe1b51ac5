from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from scenefuzz.baselines import BaselineParams
from scenefuzz.campaign import (
    CampaignConfig,
    ConfigError,
    LogError,
    find_runs,
    load_config,
    load_run,
    main,
    parse_config,
    read_runlog,
    run_experiment,
    run_repetition,
    unique_count,
    unique_curve,
    unique_percentage,
    vargha_delaney_a12,
    wilcoxon_rank_sum,
    with_overrides,
)
from scenefuzz.campaign.config import SeedCollection
from scenefuzz.campaign.runlog import ARCHIVE_NAME, CONFIG_NAME, RUNLOG_NAME
from scenefuzz.campaign.stats import search_records
from scenefuzz.dedup import UniquenessParams
from scenefuzz.evolve import GaParams
from scenefuzz.grammar import load_schema

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def _small_config(schema_path, method="RANDOM", budget=15, repetitions=1):
    return CampaignConfig(
        schema_path=str(schema_path),
        method=method,
        budget=budget,
        seed_collection=SeedCollection(budget=0),
        repetitions=repetitions,
        ga=GaParams(pop_size=5),
    )


# === Configuration ===


def test_empty_config_gives_defaults():
    config = parse_config({})
    assert config == CampaignConfig()
    assert config.seed_collection.method == "GA-UN"
    assert config.accounting == "exclude_seed_stage"


def test_config_round_trips_through_json():
    config = parse_config({"method": "NSGA2-DT", "ga": {"pop_size": 8}, "weights": [1, 0, 2]})
    assert parse_config(json.loads(json.dumps(config.to_dict()))) == config


@pytest.mark.parametrize("name", ["default.json", "quick.json"])
def test_shipped_configs_parse(name):
    config = load_config(CONFIG_DIR / name)
    assert config.schema_path.startswith("scenarios/")


@pytest.mark.parametrize(
    "data, message",
    [
        ({"budgett": 10}, "unknown config keys"),
        ({"ga": {"pop": 10}}, "unknown keys in 'ga'"),
        ({"ga": [10]}, "must be an object"),
        ({"ga": {"pop_size": 1}}, "invalid 'ga' section"),
        ({"method": "GA-FAST"}, "method"),
        ({"budget": 0}, "budget"),
        ({"th2": 150}, "th2"),
        ({"accounting": "all"}, "accounting"),
        ({"weights": [0, 0, 0]}, "nonzero"),
        ({"simulation": {"gravity": 9.8}}, "simulation"),
    ],
)
def test_config_errors(data, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(data)


def test_invalid_config_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{budget: 10}")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


def test_overrides_skip_unset_values():
    config = CampaignConfig(budget=300)
    assert with_overrides(config, budget=None, method=None) is config
    changed = with_overrides(config, budget=50, th1=25.0)
    assert (changed.budget, changed.th1) == (50, 25.0)
    with pytest.raises(ConfigError):
        with_overrides(config, budget=-1)


# === Run logs ===


def test_corrupt_runlog_line_is_reported(tmp_path):
    good = {
        "generation": 0,
        "index": 0,
        "vector": [1.0],
        "normalized_vector": [0.5],
        "objectives": {},
        "fitness": 1.0,
        "violation_kind": None,
        "unique_flag": False,
    }
    path = tmp_path / RUNLOG_NAME
    path.write_text(json.dumps(good) + "\n" + '{"generation": 1, "index"\n')
    with pytest.raises(LogError) as info:
        read_runlog(path)
    assert info.value.line == 2
    assert f"{path}:2" in str(info.value)


def test_missing_runlog(tmp_path):
    with pytest.raises(LogError, match="not found"):
        read_runlog(tmp_path / RUNLOG_NAME)


def test_find_runs_orders_repetitions_numerically(tmp_path):
    for rep in (10, 2, 1):
        rep_dir = tmp_path / f"rep_{rep}"
        rep_dir.mkdir()
        (rep_dir / RUNLOG_NAME).write_text("")
    assert [p.name for p in find_runs(tmp_path)] == ["rep_1", "rep_2", "rep_10"]
    assert find_runs(tmp_path / "rep_2") == [tmp_path / "rep_2"]
    with pytest.raises(LogError, match="no run directories"):
        find_runs(tmp_path / "rep_1" / "missing")


# === Orchestration ===


def test_seed_stage_is_logged_but_not_counted(obstacle_schema_path):
    config = replace(
        _small_config(obstacle_schema_path, budget=8),
        seed_collection=SeedCollection("GA-UN", 6),
        ga=GaParams(pop_size=4),
    )
    evaluator = run_repetition(config, 0)
    stages = [r.stage for r in evaluator.records]
    assert stages == ["seed"] * 6 + ["search"] * 8
    assert [r.index for r in evaluator.records] == list(range(14))
    assert len(unique_curve(evaluator.records, "exclude_seed_stage")) == 8
    assert len(unique_curve(evaluator.records, "include_seed_stage")) == 14


def test_missing_schema_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="schema_path"):
        run_experiment(CampaignConfig(), tmp_path)


def test_runs_are_reproducible(obstacle_schema_path, tmp_path):
    config = _small_config(obstacle_schema_path, method="GA-UN", budget=12)
    first = run_experiment(config, tmp_path / "a")[0]
    second = run_experiment(config, tmp_path / "b")[0]
    for name in (RUNLOG_NAME, ARCHIVE_NAME):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_cli_run_writes_one_record_per_simulation(obstacle_schema_path, tmp_path, capsys):
    cfg = tmp_path / "campaign.json"
    cfg.write_text(json.dumps({"seed_collection": {"budget": 0}}))
    out = tmp_path / "runs"
    main(
        [
            "-q",
            "run",
            "-c",
            str(cfg),
            "--schema",
            str(obstacle_schema_path),
            "--method",
            "RANDOM",
            "--budget",
            "100",
            "-o",
            str(out),
        ]
    )
    assert "Saved run to" in capsys.readouterr().out
    lines = (out / "rep_0" / RUNLOG_NAME).read_text().splitlines()
    assert len(lines) == 100
    data = load_run(out / "rep_0")
    assert data.method == "RANDOM"
    assert data.meta["simulations"] == 100
    assert [r.index for r in data.records] == list(range(100))
    assert json.loads((out / CONFIG_NAME).read_text())["budget"] == 100


def test_cli_analysis_commands(obstacle_schema_path, tmp_path, capsys):
    runs = {}
    for method in ("RANDOM", "GA-UN"):
        config = _small_config(obstacle_schema_path, method=method, repetitions=3)
        run_experiment(config, tmp_path / method)
        runs[method] = tmp_path / method
    out = tmp_path / "analysis"

    main(["-q", "compare", str(runs["RANDOM"]), str(runs["GA-UN"]), "-o", str(out)])
    stats = json.loads((out / "stats.json").read_text())
    assert set(stats["counts"]) == {"RANDOM", "GA-UN"}
    assert all(len(v) == 3 for v in stats["counts"].values())
    assert stats["comparisons"][0]["a"] == "RANDOM"
    reps = find_runs(runs["GA-UN"])
    expected = [unique_count(load_run(p).records, "exclude_seed_stage") for p in reps]
    assert stats["counts"]["GA-UN"] == expected
    pct = stats["unique_percentage"]["GA-UN"]
    assert pct is None or pct == pytest.approx(100.0)

    main(["-q", "report", str(runs["RANDOM"]), str(runs["GA-UN"]), "-o", str(out)])
    rows = (out / "curves.csv").read_text().splitlines()
    assert rows[0] == "method,simulations,mean,min,max"
    assert sum(row.startswith("RANDOM,") for row in rows) == 15

    main(
        [
            "-q",
            "sweep-thresholds",
            str(runs["RANDOM"]),
            "--th2-values",
            "5",
            "10",
            "--th1-values",
            "25",
            "-o",
            str(out),
        ]
    )
    sweep = json.loads((out / "sweep.json").read_text())
    assert len(sweep) == 3
    assert [c["th2"] for c in sweep[0]["cells"]] == [5.0, 10.0]

    rep_dir = runs["RANDOM"] / "rep_0"
    main(["-q", "replay", str(rep_dir), "--index", "0", "--csv", str(out / "ego.csv")])
    assert "Record 0:" in capsys.readouterr().out
    trace = json.loads((rep_dir / "trace_0.json").read_text())
    assert trace["map_id"] == "straight_road"
    assert (out / "ego.csv").read_text().startswith("step,time,x,y,heading,speed")


def test_compare_keeps_each_argument_as_its_own_group(obstacle_schema_path, tmp_path):
    runs = tmp_path / "random"
    run_experiment(_small_config(obstacle_schema_path, repetitions=3), runs)
    main(["-q", "compare", str(runs), str(runs), "-o", str(tmp_path)])
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert list(stats["counts"]) == [f"{runs} #1", f"{runs} #2"]
    (row,) = stats["comparisons"]
    assert row["p_value"] == pytest.approx(1.0)
    assert row["a12"] == pytest.approx(0.5)


def test_compare_labels_same_method_campaigns_by_path(obstacle_schema_path, tmp_path):
    for name, th1 in (("strict", 10.0), ("loose", 25.0)):
        config = replace(_small_config(obstacle_schema_path, repetitions=3), th1=th1)
        run_experiment(config, tmp_path / name)
    main(["-q", "compare", str(tmp_path / "strict"), str(tmp_path / "loose"), "-o", str(tmp_path)])
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert list(stats["counts"]) == [str(tmp_path / "strict"), str(tmp_path / "loose")]
    assert len(stats["comparisons"]) == 1


def test_analysis_uses_the_recorded_accounting_mode(obstacle_schema_path, tmp_path):
    config = replace(
        _small_config(obstacle_schema_path, method="GA-UN", budget=8),
        seed_collection=SeedCollection("GA-UN", 6),
        ga=GaParams(pop_size=4),
        accounting="include_seed_stage",
    )
    runs = tmp_path / "runs"
    (rep_dir,) = run_experiment(config, runs)
    assert load_run(rep_dir).meta["accounting"] == "include_seed_stage"

    main(["-q", "report", str(runs), "-o", str(tmp_path)])
    rows = (tmp_path / "curves.csv").read_text().splitlines()[1:]
    assert len(rows) == 14

    main(["-q", "report", str(runs), "--accounting", "exclude_seed_stage", "-o", str(tmp_path)])
    rows = (tmp_path / "curves.csv").read_text().splitlines()[1:]
    assert len(rows) == 8

    main(["-q", "sweep-thresholds", str(runs), "--th2-values", "50", "-o", str(tmp_path)])
    records = load_run(rep_dir).records
    sweep = json.loads((tmp_path / "sweep.json").read_text())
    assert sweep[0]["violations"] == sum(1 for r in records if r.violation_kind)


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["-q", "run", "-o", str(tmp_path)])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["-q", "replay", str(tmp_path / "missing"), "--index", "0"])
    assert info.value.code == 3
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "method, all_unique",
    [("GA", False), ("AV-FUZZER", False), ("GA-UN", True), ("NSGA2-UN-SM-A", True)],
)
def test_unique_percentage_on_a_broad_violation_basin(scenario_dir, method, all_unique):
    config = CampaignConfig(
        schema_path=str(scenario_dir / "static_obstacle_ahead.json"),
        method=method,
        budget=120,
        seed_collection=SeedCollection(budget=0),
        ga=GaParams(pop_size=10),
        baselines=BaselineParams(
            regression_hidden_size=8,
            regression_epochs=5,
            pretrain_budget=20,
            avfuzzer_pop_size=6,
            avfuzzer_local_copies=2,
        ),
    )
    evaluator = run_repetition(config, 0)
    schema = load_schema(config.schema_path)
    pct = unique_percentage(
        search_records(evaluator.records, config.accounting),
        [e.to_dict() for e in evaluator.archive],
        method,
        schema,
        UniquenessParams(config.th1, config.th2),
    )
    assert pct is not None
    if all_unique:
        assert pct == 100.0
    else:
        assert pct < 100.0


@pytest.mark.slow
def test_guided_search_beats_random_on_the_leading_car_scenario(scenario_dir, tmp_path):
    counts = {}
    for method in ("RANDOM", "GA-UN", "GA-UN-NN-GRAD"):
        config = CampaignConfig(
            schema_path=str(scenario_dir / "turning_right_leading_car.json"),
            method=method,
            budget=200,
            seed_collection=SeedCollection("GA-UN", 100),
            repetitions=6,
            ga=GaParams(pop_size=10),
        )
        rep_dirs = run_experiment(config, tmp_path / method)
        assert len(rep_dirs) == 6
        counts[method] = [
            unique_count(load_run(d).records, config.accounting) for d in rep_dirs
        ]
    grad, random, ga_un = (
        np.array(counts[m], dtype=float) for m in ("GA-UN-NN-GRAD", "RANDOM", "GA-UN")
    )
    assert grad.mean() > random.mean()
    assert vargha_delaney_a12(grad, random).a12 >= 0.7
    assert wilcoxon_rank_sum(grad, random) < 0.05
    assert grad.mean() >= ga_un.mean()
