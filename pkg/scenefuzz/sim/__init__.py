"""Deterministic 2D micro-simulator that hosts the controller under test.

Modules:
    geometry: Oriented boxes, polylines and angle helpers.
    maps: Built-in road maps rasterized into drivable / opposite-lane grids.
    agents: Agent state and the scripted behaviour of NPC vehicles and pedestrians.
    kernel: World construction, the built-in ego controller, stepping and ``run``.
    replay: Trace JSON/CSV export and off-screen trace plots.

Usage:
    from scenefuzz.sim import run, SimConfig

    outcome = run(schema, vector)
    print(outcome.termination, outcome.violation)
"""

from .kernel import (
    ContactEvent,
    SimConfig,
    SimulationOutcome,
    Violation,
    World,
    build_world,
    run,
    step,
)
from .maps import MapError, RoadMap, load_map
from .replay import export_ego_path_csv, load_trace, plot_trace, save_trace

__all__ = [
    "ContactEvent",
    "SimConfig",
    "SimulationOutcome",
    "Violation",
    "World",
    "build_world",
    "run",
    "step",
    "MapError",
    "RoadMap",
    "load_map",
    "export_ego_path_csv",
    "load_trace",
    "plot_trace",
    "save_trace",
]
