"""Trace persistence and off-screen rendering of simulation outcomes."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Polygon

from ..constants import KIND_COLORS
from .agents import AgentState
from .kernel import ContactEvent, SimulationOutcome, Violation
from .maps import RoadMap, load_map

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("x", "y", "heading", "speed", "triggered", "traveled")


def trace_to_dict(outcome: SimulationOutcome) -> dict[str, Any]:
    first = outcome.trace[0]
    return {
        "map_id": outcome.map_id,
        "termination": outcome.termination,
        "steps": outcome.steps,
        "violation": None if outcome.violation is None else outcome.violation.to_dict(),
        "events": [vars(e) for e in outcome.events],
        "warnings": list(outcome.warnings),
        "friction": outcome.friction,
        "weather": outcome.weather,
        "seed": outcome.seed,
        "route": outcome.route.tolist(),
        "agents": [
            {"name": s.name, "kind": s.kind, "half_extents": [s.half_length, s.half_width]}
            for s in first
        ],
        "fields": list(TRACE_FIELDS),
        "trace": [[[getattr(s, f) for f in TRACE_FIELDS] for s in snap] for snap in outcome.trace],
    }


def trace_from_dict(data: dict[str, Any]) -> SimulationOutcome:
    agents = data["agents"]
    trace = []
    for snap in data["trace"]:
        states = []
        for meta, row in zip(agents, snap):
            x, y, heading, speed, triggered, traveled = row
            states.append(
                AgentState(
                    meta["name"],
                    meta["kind"],
                    float(x),
                    float(y),
                    float(heading),
                    float(speed),
                    float(meta["half_extents"][0]),
                    float(meta["half_extents"][1]),
                    bool(triggered),
                    float(traveled),
                )
            )
        trace.append(tuple(states))
    violation = data.get("violation")
    return SimulationOutcome(
        trace=trace,
        violation=None if violation is None else Violation(**violation),
        termination=data["termination"],
        steps=int(data["steps"]),
        map_id=data["map_id"],
        route=np.asarray(data["route"], dtype=float),
        events=[ContactEvent(**e) for e in data.get("events", [])],
        warnings=list(data.get("warnings", [])),
        friction=float(data.get("friction", 1.0)),
        weather=data.get("weather", ""),
        seed=int(data.get("seed", 0)),
    )


def save_trace(outcome: SimulationOutcome, path: str | Path) -> Path:
    """Write the per-step agent states as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(trace_to_dict(outcome)), encoding="utf-8")
    logger.info("trace written to %s", path)
    return path


def load_trace(path: str | Path) -> SimulationOutcome:
    return trace_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def export_ego_path_csv(outcome: SimulationOutcome, path: str | Path, dt: float = 0.1) -> Path:
    """Write the ego path as ``step,time,x,y,heading,speed`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "time", "x", "y", "heading", "speed"])
        for i, snap in enumerate(outcome.trace):
            ego = snap[0]
            writer.writerow([i, round(i * dt, 6), ego.x, ego.y, ego.heading, ego.speed])
    return path


def plot_trace(
    outcome: SimulationOutcome,
    road_map: Optional[RoadMap] = None,
    path: str | Path = "trace.png",
    *,
    every: int = 10,
) -> str:
    """Render the road, the reference route and agent paths; return the saved PNG path."""
    road_map = road_map or load_map(outcome.map_id, tuple(map(tuple, outcome.route)))
    fig = Figure(figsize=(8, 8))
    ax = fig.subplots()

    layer = np.where(road_map.drivable, 1.0, 0.0) + np.where(road_map.opposite, 0.5, 0.0)
    ax.imshow(layer.T, origin="lower", extent=road_map.extent, cmap="Greys", vmin=0, vmax=2.5)
    ax.plot(outcome.route[:, 0], outcome.route[:, 1], "--", color="#72B7B2", lw=1, label="route")

    for j, first in enumerate(outcome.trace[0]):
        xy = np.array([[snap[j].x, snap[j].y] for snap in outcome.trace])
        color = KIND_COLORS.get(first.kind, "#4C78A8")
        ax.plot(xy[:, 0], xy[:, 1], color=color, lw=1.5 if j == 0 else 1.0)
        for snap in outcome.trace[::every] + [outcome.trace[-1]]:
            ax.add_patch(
                Polygon(snap[j].corners(), closed=True, fill=False, ec=color, lw=0.6, alpha=0.6)
            )

    title = outcome.termination
    if outcome.violation is not None:
        v = outcome.violation
        title += f": {v.kind}" + (f" ({v.sub_kind})" if v.sub_kind else f" with {v.other_name}")
        ego = outcome.trace[-1][0]
        ax.plot([ego.x], [ego.y], "x", color="#E45756", ms=12, mew=2)
    ax.set_title(title)
    ax.set_aspect("equal")
    track = outcome.ego_track()
    pad = 25.0
    ax.set_xlim(track[:, 0].min() - pad, track[:, 0].max() + pad)
    ax.set_ylim(track[:, 1].min() - pad, track[:, 1].max() + pad)
    ax.legend(loc="upper right")

    out = str(path)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    return out
