from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from ..constants import SWEEP_TH1, SWEEP_TH2
from ..dedup import UniquenessParams, sweep_thresholds
from ..grammar import SchemaError, load_schema
from ..objectives import compute_objectives
from ..sim.kernel import SimConfig, run
from ..sim.maps import MapError, load_map
from ..sim.replay import export_ego_path_csv, plot_trace, save_trace
from .config import (
    ACCOUNTING_MODES,
    DEFAULT_ACCOUNTING,
    CampaignConfig,
    ConfigError,
    load_config,
    with_overrides,
)
from .report import plot_curves, write_curves_csv
from .runlog import LogError, RunData, find_runs, load_run
from .runner import run_experiment
from .stats import compare_methods, search_records, unique_count, unique_curve, unique_percentage

logger = logging.getLogger(__name__)


def _load_runs(paths: Sequence[Path]) -> dict[str, list[RunData]]:
    """Repetitions grouped per command-line argument, in command-line order.

    A group is labelled by its method when no other argument ran the same method and by its
    path otherwise; a path given more than once also gets its argument position.
    """
    groups = []
    for path in paths:
        reps = [load_run(rep_dir) for rep_dir in find_runs(path)]
        methods = {r.method for r in reps}
        method = methods.pop() if len(methods) == 1 else None
        groups.append((path, method or path.name, reps))
    names = Counter(name for _, name, _ in groups)
    given = Counter(str(path) for path, _, _ in groups)
    grouped: dict[str, list[RunData]] = {}
    for position, (path, name, reps) in enumerate(groups, start=1):
        if names[name] == 1:
            label = name
        elif given[str(path)] == 1:
            label = str(path)
        else:
            label = f"{path} #{position}"
        grouped[label] = reps
    return grouped


def _accounting(args: argparse.Namespace, data: RunData) -> str:
    """The ``--accounting`` flag, else the mode the run was recorded under."""
    return args.accounting or data.meta.get("accounting", DEFAULT_ACCOUNTING)


def _schema_of(data: RunData, override: Optional[Path]):
    path = override or data.meta.get("schema_path")
    if not path:
        raise ConfigError(f"{data.path}: no schema path recorded; pass --schema")
    return load_schema(path)


def _write_json(payload: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    return path


# === Subcommands ===


def _cmd_run(args: argparse.Namespace) -> None:
    config = load_config(args.config) if args.config else CampaignConfig()
    config = with_overrides(
        config,
        schema_path=str(args.schema) if args.schema else None,
        method=args.method,
        budget=args.budget,
        rng_seed=args.seed,
        th1=args.th1,
        th2=args.th2,
        accounting=args.accounting,
        repetitions=args.repetitions,
        workers=args.workers,
    )
    paths = run_experiment(config, args.out_dir)
    for path in paths:
        print(f"Saved run to {path}")


def _cmd_compare(args: argparse.Namespace) -> None:
    grouped = _load_runs(args.runs)
    if sum(len(reps) for reps in grouped.values()) < 2:
        raise ConfigError("compare needs at least two run directories")
    counts, percentages = {}, {}
    for label, reps in grouped.items():
        counts[label] = [unique_count(r.records, _accounting(args, r)) for r in reps]
        pooled = []
        for r in reps:
            schema = _schema_of(r, args.schema)
            params = UniquenessParams(r.meta.get("th1", 10.0), r.meta.get("th2", 50.0))
            counted = search_records(r.records, _accounting(args, r))
            method = r.method or ""
            pct = unique_percentage(counted, r.archive["entries"], method, schema, params)
            if pct is not None:
                pooled.append(pct)
        percentages[label] = float(np.mean(pooled)) if pooled else None

    report = compare_methods(counts, percentages)
    out = _write_json(report.to_dict(), args.out_dir / "stats.json")
    for row in report.comparisons:
        p_value = "n/a" if row["p_value"] is None else f"{row['p_value']:.4f}"
        print(
            f"{row['a']} vs {row['b']}: mean {row['mean_a']:.2f} / {row['mean_b']:.2f}, "
            f"p={p_value}, A12={row['a12']:.3f} ({row['magnitude']})"
        )
    print(f"Saved statistics to {out}")


def _cmd_replay(args: argparse.Namespace) -> None:
    data = load_run(args.run)
    matches = [r for r in data.records if r.index == args.index]
    if not matches:
        raise LogError(data.path, f"no record with index {args.index}")
    record = matches[0]
    schema = _schema_of(data, args.schema)
    cfg = SimConfig.from_dict(data.meta.get("simulation", {}))
    outcome = run(schema, np.asarray(record.vector), cfg=cfg)
    road_map = load_map(schema.map_id, schema.ego_route, cfg.map_resolution)
    obj = compute_objectives(
        outcome,
        road_map,
        wronglane_metric=data.meta.get("wronglane_metric", "distance"),
        object_metric=data.meta.get("object_metric", "box"),
        fov_half_angle=cfg.fov_half_angle,
    )
    if obj.violation_kind != record.violation_kind:
        logger.warning(
            "replay of record %d gave %s, logged %s",
            args.index,
            obj.violation_kind,
            record.violation_kind,
        )
    print(f"Record {args.index}: {outcome.termination}, violation {obj.violation_kind}")
    out = args.out or data.path / f"trace_{args.index}.json"
    print(f"Saved trace to {save_trace(outcome, out)}")
    if args.csv:
        print(f"Saved ego path to {export_ego_path_csv(outcome, args.csv, cfg.dt)}")
    if args.plot:
        print(f"Saved plot to {plot_trace(outcome, road_map, args.plot)}")


def _cmd_report(args: argparse.Namespace) -> None:
    grouped = _load_runs(args.runs)
    curves = {
        label: [unique_curve(r.records, _accounting(args, r)) for r in reps]
        for label, reps in grouped.items()
    }
    out = write_curves_csv(curves, args.out_dir / "curves.csv")
    print(f"Saved curves to {out}")
    if args.plot:
        print(f"Saved plot to {plot_curves(curves, args.plot)}")


def _cmd_sweep(args: argparse.Namespace) -> None:
    cells_by_run = []
    for rep_dir in find_runs(args.run):
        data = load_run(rep_dir)
        schema = _schema_of(data, args.schema)
        stream = [
            (np.asarray(r.vector), r.violation_kind)
            for r in search_records(data.records, _accounting(args, data))
            if r.violation_kind
        ]
        cells = sweep_thresholds(stream, schema, args.th2_values, args.th1_values)
        cells_by_run.append({"run": str(rep_dir), "violations": len(stream), "cells": cells})
        for cell in cells:
            print(f"{rep_dir.name}: th2={cell['th2']:g} th1={cell['th1']:g} -> {cell['count']}")
    out = _write_json(cells_by_run, args.out_dir / "sweep.json")
    print(f"Saved sweep to {out}")


# === Argument parsing ===


def _add_accounting(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--accounting",
        choices=ACCOUNTING_MODES,
        help="Whether seed-collection simulations count against the budget "
        "(default: the campaign config, or the mode recorded with each run).",
    )


def _add_schema(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--schema",
        type=Path,
        help="Scenario schema JSON (default: the path recorded with the run).",
    )


def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="scenefuzz",
        description="Grammar-based scenario fuzzing of a driving controller in a 2D simulator.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Log warnings only.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Run a fuzzing campaign.")
    p.add_argument("-c", "--config", type=Path, help="Campaign config JSON.")
    _add_schema(p)
    p.add_argument("--method", help="Search method, e.g. GA-UN-NN-GRAD or NSGA2-DT.")
    p.add_argument("--budget", type=int, help="Search-stage simulations per repetition.")
    p.add_argument("--seed", type=int, help="Base RNG seed.")
    p.add_argument("--th1", type=float, help="Percent of changeable fields that must differ.")
    p.add_argument("--th2", type=float, help="Percent of a field's range that counts as different.")
    p.add_argument("--repetitions", type=int, help="Number of repetitions.")
    p.add_argument("--workers", type=int, help="Simulation worker processes.")
    _add_accounting(p)
    p.add_argument("-o", "--out-dir", type=Path, default=Path("runs"), help="Output directory.")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="Compare methods over their repetitions.")
    p.add_argument("runs", nargs="+", type=Path, help="Campaign or repetition directories.")
    _add_schema(p)
    _add_accounting(p)
    p.add_argument("-o", "--out-dir", type=Path, default=Path("."), help="Where stats.json goes.")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("replay", help="Re-simulate one logged scenario.")
    p.add_argument("run", type=Path, help="Repetition directory holding runlog.jsonl.")
    p.add_argument("--index", type=int, required=True, help="Simulation index in the run log.")
    _add_schema(p)
    p.add_argument("--out", type=Path, help="Trace JSON path (default: <run>/trace_<i>.json).")
    p.add_argument("--csv", type=Path, help="Also write the ego path as CSV.")
    p.add_argument("--plot", type=Path, help="Also render the trace to this PNG.")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("report", help="Counts-vs-simulations curves as CSV.")
    p.add_argument("runs", nargs="+", type=Path, help="Campaign or repetition directories.")
    _add_accounting(p)
    p.add_argument("-o", "--out-dir", type=Path, default=Path("."), help="Where curves.csv goes.")
    p.add_argument("--plot", type=Path, help="Also plot the mean curves to this PNG.")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("sweep-thresholds", help="Unique counts over a (th2, th1) grid.")
    p.add_argument("run", type=Path, help="Campaign or repetition directory.")
    _add_schema(p)
    _add_accounting(p)
    p.add_argument("--th2-values", type=float, nargs="+", default=list(SWEEP_TH2))
    p.add_argument("--th1-values", type=float, nargs="+", default=list(SWEEP_TH1))
    p.add_argument("-o", "--out-dir", type=Path, default=Path("."), help="Where sweep.json goes.")
    p.set_defaults(func=_cmd_sweep)

    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> None:
    args = _parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, SchemaError, MapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2) from exc
    except (OSError, LogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(3) from exc


if __name__ == "__main__":
    main()
