"""Smooth objective values of a simulated scenario and the weighted-sum fitness."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, Optional, Sequence

import numpy as np

from .constants import DISTANCE_CAP, FOV_HALF_ANGLE
from .sim.geometry import box_corners_batch, box_distance, project_points_to_polyline, wrap_angle
from .sim.kernel import SimulationOutcome
from .sim.maps import RoadMap

MODES = ("collision", "out_of_road")
WRONGLANE_METRICS = ("distance", "heading_weighted")
OBJECT_METRICS = ("box", "front_corners")
OBJECTIVE_NAMES = ("f_collision", "f_object", "f_view", "f_wronglane", "f_offroad", "f_deviation")


@dataclass(frozen=True)
class ObjectiveVector:
    f_collision: float = -1.0
    f_object: float = DISTANCE_CAP
    f_view: float = FOV_HALF_ANGLE
    f_wronglane: float = DISTANCE_CAP
    f_offroad: float = DISTANCE_CAP
    f_deviation: float = 0.0
    violation_kind: Optional[str] = None

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in OBJECTIVE_NAMES], dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ObjectiveVector":
        values = {name: float(data[name]) for name in OBJECTIVE_NAMES}
        return cls(**values, violation_kind=data.get("violation_kind"))


@dataclass(frozen=True)
class FitnessWeights:
    """Weights on the active, sign-folded objective triple."""

    w: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        w = tuple(float(x) for x in self.w)
        if len(w) != 3:
            raise ValueError(f"expected 3 weights, got {len(w)}")
        if not all(math.isfinite(x) for x in w):
            raise ValueError(f"weights must be finite: {w}")
        if not any(w):
            raise ValueError("at least one weight must be nonzero")
        object.__setattr__(self, "w", w)


# === Individual objectives ===


def _object_distance(outcome: SimulationOutcome, metric: str) -> float:
    trace = outcome.trace
    if len(trace[0]) < 2:
        return DISTANCE_CAP
    xy = np.array([[[s.x, s.y] for s in snap] for snap in trace])
    heading = np.array([[s.heading for s in snap] for snap in trace])
    half = np.array([[s.half_length, s.half_width] for s in trace[0]])

    if metric == "front_corners":
        t_count, n_agents = heading.shape
        corners = box_corners_batch(
            xy.reshape(-1, 2), heading.ravel(), np.tile(half, (t_count, 1))
        ).reshape(t_count, n_agents, 4, 2)
        front = corners[:, 0, [0, 3], :]
        d = front[:, None, :, None, :] - corners[:, 1:, None, :, :]
        return float(min(DISTANCE_CAP, np.hypot(d[..., 0], d[..., 1]).min()))

    # Exact box distance only where the circumscribed-circle bound can still beat the best.
    radius = np.hypot(half[:, 0], half[:, 1])
    center = np.hypot(*(xy[:, 1:, :] - xy[:, :1, :]).transpose(2, 0, 1))
    bound = center - radius[0] - radius[1:]
    order = np.argsort(bound, axis=None, kind="stable")
    best = DISTANCE_CAP
    for flat in order:
        t, j = np.unravel_index(flat, bound.shape)
        if bound[t, j] >= best:
            break
        ego, other = trace[t][0], trace[t][j + 1]
        best = min(best, box_distance(ego.corners(), other.corners()))
        if best == 0.0:
            break
    return float(best)


def _view_angle(outcome: SimulationOutcome, fov: float) -> float:
    trace = outcome.trace
    if len(trace[0]) < 2:
        return fov
    xy = np.array([[[s.x, s.y] for s in snap] for snap in trace])
    heading = np.array([snap[0].heading for snap in trace])
    rel = xy[:, 1:, :] - xy[:, :1, :]
    nearest = np.argmin(np.hypot(rel[..., 0], rel[..., 1]), axis=1)
    r = rel[np.arange(len(trace)), nearest]
    offset = np.abs(wrap_angle(np.arctan2(r[:, 1], r[:, 0]) - heading))
    return float(np.minimum(offset, fov).min())


def _region_distance(
    dist: np.ndarray, nearest: np.ndarray, track: np.ndarray, metric: str
) -> float:
    dist = np.minimum(dist, DISTANCE_CAP)
    if metric == "heading_weighted":
        d = nearest - track[:, :2]
        forward = np.column_stack([np.cos(track[:, 2]), np.sin(track[:, 2])])
        norm = np.hypot(d[:, 0], d[:, 1])
        cos = np.einsum("ij,ij->i", d, forward) / np.where(norm > 0, norm, 1.0)
        theta = np.arccos(np.clip(cos, -1.0, 1.0))
        weighted = np.where(norm > 0, dist * np.maximum(0.0, 1.0 - 2.0 * theta / math.pi), 0.0)
        dist = np.where(np.isfinite(nearest).all(axis=1), weighted, DISTANCE_CAP)
    return float(dist.min())


def _deviation(outcome: SimulationOutcome, track: np.ndarray) -> float:
    if len(outcome.route) < 2:
        return 0.0
    d_dev, seg_heading = project_points_to_polyline(track[:, :2], outcome.route)
    theta = np.abs(wrap_angle(track[:, 2] - seg_heading))
    return float((theta * d_dev).max())


def compute_objectives(
    outcome: SimulationOutcome,
    road_map: RoadMap,
    *,
    wronglane_metric: str = "distance",
    object_metric: str = "box",
    fov_half_angle: float = FOV_HALF_ANGLE,
) -> ObjectiveVector:
    """Post-hoc objectives over the whole trace of one simulation."""
    if wronglane_metric not in WRONGLANE_METRICS:
        raise ValueError(f"unknown wronglane metric {wronglane_metric!r}")
    if object_metric not in OBJECT_METRICS:
        raise ValueError(f"unknown object metric {object_metric!r}")
    if not outcome.trace:
        raise ValueError("outcome has an empty trace")

    track = outcome.ego_track()
    violation = outcome.violation
    f_collision = -1.0
    if violation is not None and violation.kind == "collision":
        f_collision = float(violation.ego_speed_at_impact)

    wl_dist, wl_nearest = road_map.wronglane_distance(track[:, :2])
    or_dist, or_nearest = road_map.offroad_distance(track[:, :2])
    return ObjectiveVector(
        f_collision=f_collision,
        f_object=_object_distance(outcome, object_metric),
        f_view=_view_angle(outcome, fov_half_angle),
        f_wronglane=_region_distance(wl_dist, wl_nearest, track, wronglane_metric),
        f_offroad=_region_distance(or_dist, or_nearest, track, wronglane_metric),
        f_deviation=_deviation(outcome, track),
        violation_kind=outcome.violation_kind,
    )


# === Fitness ===


def objective_triple(obj: ObjectiveVector, mode: str) -> np.ndarray:
    """Sign-folded triple of the active mode; lower means closer to a violation."""
    if mode == "collision":
        return np.array([-obj.f_collision, obj.f_object, obj.f_view])
    if mode == "out_of_road":
        return np.array([obj.f_wronglane, obj.f_offroad, -obj.f_deviation])
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def fitness(obj: ObjectiveVector, weights: FitnessWeights, mode: str) -> float:
    return float(np.dot(weights.w, objective_triple(obj, mode)))


def fitness_many(objs: Sequence[ObjectiveVector], weights: FitnessWeights, mode: str) -> np.ndarray:
    return np.array([fitness(o, weights, mode) for o in objs], dtype=float)
