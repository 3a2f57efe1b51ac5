"""Fixed-step kinematic simulation of one specific scenario."""

from __future__ import annotations

import logging
import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import numpy as np

from .. import constants as C
from ..grammar import SearchSpaceSchema
from .agents import (
    EGO,
    PEDESTRIAN,
    STATIC,
    VEHICLE,
    Agent,
    AgentState,
    update_npc,
)
from .geometry import (
    Point,
    arc_lengths,
    boxes_overlap,
    densify,
    point_at_ratio,
    point_segment_distance,
    polyline_curvature,
    segment_hits_box,
    wrap_angle,
)
from .maps import RoadMap, load_map

logger = logging.getLogger(__name__)

CURVE_PREVIEW = 10.0
PROGRESS_WINDOW = 20


@dataclass(frozen=True)
class SimConfig:
    """Physical constants of the simulator and the built-in ego controller."""

    dt: float = C.DT
    max_steps: int = C.MAX_STEPS
    ego_half_extents: tuple[float, float] = C.EGO_HALF_EXTENTS
    wheelbase: float = C.EGO_WHEELBASE
    max_steer: float = C.EGO_MAX_STEER
    cruise_speed: float = C.EGO_CRUISE_SPEED
    initial_speed: float = C.EGO_INITIAL_SPEED
    fov_half_angle: float = C.FOV_HALF_ANGLE
    sensing_range: float = C.SENSING_RANGE
    max_accel: float = C.MAX_ACCEL
    max_brake: float = C.MAX_BRAKE
    reaction_delay: float = C.REACTION_DELAY
    comfort_decel: float = C.COMFORT_DECEL
    comfort_lateral_accel: float = C.COMFORT_LATERAL_ACCEL
    lateral_grip: float = C.LATERAL_GRIP
    standstill_gap: float = C.STANDSTILL_GAP
    speed_gain: float = C.SPEED_GAIN
    lookahead_min: float = C.LOOKAHEAD_MIN
    lookahead_gain: float = C.LOOKAHEAD_GAIN
    goal_tolerance: float = C.GOAL_TOLERANCE
    corridor_margin: float = C.CORRIDOR_MARGIN
    min_impact_speed: float = C.MIN_IMPACT_SPEED
    collision_view_window: float = C.COLLISION_VIEW_WINDOW
    avoid_horizon: float = C.AVOID_HORIZON
    pedestrian_half_extent: float = C.PEDESTRIAN_HALF_EXTENT
    pedestrian_max_accel: float = C.PEDESTRIAN_MAX_ACCEL
    npc_max_yaw_rate: float = C.NPC_MAX_YAW_RATE
    route_spacing: float = C.ROUTE_SPACING
    map_resolution: float = C.MAP_RESOLUTION

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown simulation keys: {sorted(unknown)}")
        values = dict(data)
        if "ego_half_extents" in values:
            values["ego_half_extents"] = tuple(float(v) for v in values["ego_half_extents"])
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Violation:
    kind: str  # "collision" | "out_of_road"
    step: int
    other_kind: Optional[str] = None
    other_name: Optional[str] = None
    ego_speed_at_impact: float = 0.0
    bearing_in_fov: bool = False
    sub_kind: Optional[str] = None  # "wronglane" | "offroad"

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ContactEvent:
    """A box contact that did not count as a collision violation."""

    step: int
    other_name: str
    other_kind: str
    ego_speed: float
    bearing_in_fov: bool
    reason: str


@dataclass
class SimulationOutcome:
    trace: list[tuple[AgentState, ...]]
    violation: Optional[Violation]
    termination: str  # "violation" | "destination_reached" | "timeout"
    steps: int
    map_id: str
    route: np.ndarray
    events: list[ContactEvent] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    friction: float = 1.0
    weather: str = C.WEATHER_MODES[0][0]
    seed: int = 0

    @property
    def violation_kind(self) -> Optional[str]:
        return None if self.violation is None else self.violation.kind

    def ego_track(self) -> np.ndarray:
        """``(T, 4)`` array of ego x, y, heading, speed."""
        return np.array([[s[0].x, s[0].y, s[0].heading, s[0].speed] for s in self.trace])


@dataclass
class World:
    schema: SearchSpaceSchema
    cfg: SimConfig
    road_map: RoadMap
    ego: Agent
    agents: list[Agent]
    route: np.ndarray
    reference_route: np.ndarray
    friction: float
    weather: str
    sensing_range: float
    warnings: list[str] = field(default_factory=list)
    step_index: int = 0
    progress: int = 0
    violation: Optional[Violation] = None
    termination: Optional[str] = None
    events: list[ContactEvent] = field(default_factory=list)
    _route_s: list[float] = field(default=None, repr=False)
    _route_xy: list[list[float]] = field(default=None, repr=False)
    _curve_speed: list[float] = field(default=None, repr=False)
    _gap_buffer: deque = field(default=None, repr=False)
    _last_in_view: dict[str, int] = field(default_factory=dict, repr=False)
    _contacts: set[str] = field(default_factory=set, repr=False)

    def __post_init__(self) -> None:
        cfg = self.cfg
        s = arc_lengths(self.route)
        # Highest curvature in the preview window ahead of every route point, as a speed cap.
        kappa = polyline_curvature(self.route)
        stop = np.searchsorted(s, s + CURVE_PREVIEW, side="right")
        preview = np.array([kappa[i:j].max() for i, j in enumerate(stop)])
        with np.errstate(divide="ignore"):
            curve = np.where(
                preview > 1e-6, np.sqrt(cfg.comfort_lateral_accel / preview), math.inf
            )
        self._route_s = s.tolist()
        self._route_xy = self.route.tolist()
        self._curve_speed = curve.tolist()
        delay = int(round(cfg.reaction_delay / cfg.dt))
        self._gap_buffer = deque([math.inf] * (delay + 1), maxlen=delay + 1)

    def snapshot(self) -> tuple[AgentState, ...]:
        return (self.ego.state(), *(a.state() for a in self.agents))

    @property
    def done(self) -> bool:
        return self.termination is not None


# === World construction ===


def _value(values: dict[str, float], key: str, default: float) -> float:
    return float(values.get(key, default))


def _index(values: dict[str, float], key: str, default: int, size: int) -> int:
    return int(np.clip(round(_value(values, key, default)), 0, size - 1))


def _center(schema: SearchSpaceSchema, prefix: str, route: np.ndarray) -> np.ndarray:
    transform = schema.center_transforms.get(prefix)
    if transform is None:
        return point_at_ratio(route, 0.5)
    if transform.kind == "absolute":
        return np.array([transform.x, transform.y])
    return point_at_ratio(route, transform.ratio)


def _count(values: dict[str, float], key: str, prefix: str) -> int:
    present = len({k.split(".")[0] for k in values if k.startswith(prefix + "_")})
    if key not in values:
        return present
    return max(0, min(present, int(round(values[key]))))


def _spawn(world_map: RoadMap, name: str, pos: np.ndarray, warnings: list[str]) -> np.ndarray:
    if world_map.in_bounds(pos)[0]:
        return pos
    clamped = world_map.nearest_drivable(pos)
    msg = (
        f"{name} spawn ({pos[0]:.2f}, {pos[1]:.2f}) outside map, "
        f"clamped to ({clamped[0]:.2f}, {clamped[1]:.2f})"
    )
    warnings.append(msg)
    logger.warning(msg)
    return clamped


def _perturbed_route(schema: SearchSpaceSchema, values: dict[str, float]) -> np.ndarray:
    route = np.array(schema.ego_route, dtype=float)
    for j in range(len(route) - 2):
        key = f"ego.perturbation_{j}"
        route[j + 1, 0] += _value(values, key + ".x", 0.0)
        route[j + 1, 1] += _value(values, key + ".y", 0.0)
    return route


def build_world(
    schema: SearchSpaceSchema, v: np.ndarray, cfg: Optional[SimConfig] = None
) -> World:
    """Instantiate the initial scene described by vector ``v``."""
    cfg = cfg or SimConfig()
    if len(schema.ego_route) < 2:
        raise ValueError(f"{schema.name}: schema has no ego_route")
    values = schema.as_dict(v)
    road_map = load_map(schema.map_id, schema.ego_route, cfg.map_resolution)
    reference = densify(np.array(schema.ego_route, dtype=float), cfg.route_spacing)
    route = densify(_perturbed_route(schema, values), cfg.route_spacing)

    weather_idx = _index(values, "background.weather_index", 0, len(C.WEATHER_MODES))
    weather, friction_factor, sensing_factor = C.WEATHER_MODES[weather_idx]
    friction = _value(values, "background.friction", 1.0) * friction_factor

    warnings: list[str] = []
    agents: list[Agent] = []

    for i in range(_count(values, "agents.num_pedestrians", "pedestrian")):
        p = f"pedestrian_{i}"
        pos = _center(schema, p, reference) + [
            _value(values, f"{p}.setup.location.x", 0.0),
            _value(values, f"{p}.setup.location.y", 0.0),
        ]
        yaw = values.get(f"{p}.setup.yaw", values.get(f"{p}.setup.direction", 0.0))
        half = cfg.pedestrian_half_extent
        spawn = _spawn(road_map, p, pos, warnings)
        agents.append(
            Agent(
                name=p,
                kind=PEDESTRIAN,
                x=spawn[0],
                y=spawn[1],
                heading=float(wrap_angle(math.radians(yaw))),
                half_extents=(half, half),
                type_index=int(round(_value(values, f"{p}.setup.type", 0))),
                trigger_distance=_value(values, f"{p}.trigger_event.trigger_distance", math.inf),
                target_speed=_value(values, f"{p}.trigger_event.target_speed", 0.0),
                travel_distance=_value(values, f"{p}.trigger_event.travel_distance", math.inf),
            )
        )

    for i in range(_count(values, "agents.num_vehicles", "vehicle")):
        p = f"vehicle_{i}"
        center = _center(schema, p, reference)
        pos = center + [
            _value(values, f"{p}.setup.location.x", 0.0),
            _value(values, f"{p}.setup.location.y", 0.0),
        ]
        kind = _index(values, f"{p}.setup.type", 1, len(C.VEHICLE_HALF_EXTENTS))
        follower = _value(values, f"{p}.trigger_event.waypoint_follower", 0) >= 0.5
        target = None
        if follower:
            target = (
                float(center[0] + _value(values, f"{p}.trigger_event.target.x", 0.0)),
                float(center[1] + _value(values, f"{p}.trigger_event.target.y", 0.0)),
                math.radians(_value(values, f"{p}.trigger_event.target.yaw", 0.0)),
            )
        initial_speed = max(0.0, _value(values, f"{p}.setup.initial_speed", 0.0))
        spawn = _spawn(road_map, p, pos, warnings)
        agents.append(
            Agent(
                name=p,
                kind=VEHICLE,
                x=spawn[0],
                y=spawn[1],
                heading=float(wrap_angle(math.radians(_value(values, f"{p}.setup.yaw", 0.0)))),
                half_extents=C.VEHICLE_HALF_EXTENTS[kind],
                speed=initial_speed,
                initial_speed=initial_speed,
                type_index=kind,
                color=int(round(_value(values, f"{p}.setup.color", 0))),
                trigger_distance=_value(values, f"{p}.trigger_event.trigger_distance", math.inf),
                target_speed=_value(values, f"{p}.trigger_event.target_speed", 0.0),
                travel_distance=_value(values, f"{p}.trigger_event.travel_distance", math.inf),
                waypoint_follower=follower,
                avoid_collision=_value(values, f"{p}.trigger_event.avoid_collision", 0) >= 0.5,
                target=target,
            )
        )

    for i in range(_count(values, "agents.num_static", "static")):
        p = f"static_{i}"
        pos = _center(schema, p, reference) + [
            _value(values, f"{p}.setup.location.x", 0.0),
            _value(values, f"{p}.setup.location.y", 0.0),
        ]
        kind = _index(values, f"{p}.setup.type", 0, len(C.STATIC_HALF_EXTENTS))
        spawn = _spawn(road_map, p, pos, warnings)
        agents.append(
            Agent(
                name=p,
                kind=STATIC,
                x=spawn[0],
                y=spawn[1],
                heading=float(wrap_angle(math.radians(_value(values, f"{p}.setup.yaw", 0.0)))),
                half_extents=C.STATIC_HALF_EXTENTS[kind],
                type_index=kind,
            )
        )

    start_heading = math.atan2(route[1, 1] - route[0, 1], route[1, 0] - route[0, 0])
    ego = Agent(
        name=EGO,
        kind=EGO,
        x=route[0, 0],
        y=route[0, 1],
        heading=start_heading,
        half_extents=cfg.ego_half_extents,
        speed=cfg.initial_speed,
    )
    return World(
        schema=schema,
        cfg=cfg,
        road_map=road_map,
        ego=ego,
        agents=agents,
        route=route,
        reference_route=reference,
        friction=friction,
        weather=weather,
        sensing_range=cfg.sensing_range * sensing_factor,
        warnings=warnings,
    )


# === Ego controller ===


def _in_view(ego: Agent, agent: Agent, fov: float) -> bool:
    """Whether the agent's center or any corner lies within the ego's field of view."""
    ex, ey, heading = ego.x, ego.y, ego.heading
    dx, dy = agent.x - ex, agent.y - ey
    off = abs(wrap_angle(math.atan2(dy, dx) - heading))
    if off <= fov:
        return True
    # Corners stay within the agent's radius, so they subtend at most asin(r / d).
    d = math.hypot(dx, dy)
    if d > agent.radius and off - math.asin(agent.radius / d) > fov:
        return False
    for px, py in agent.corners():
        if abs(wrap_angle(math.atan2(py - ey, px - ex) - heading)) <= fov:
            return True
    return False


def _occludes(other: Agent, eye: Point, target: Point) -> bool:
    if point_segment_distance((other.x, other.y), eye, target) > other.radius:
        return False
    return segment_hits_box(eye, target, other.corners())


def perceived_gap(world: World) -> float:
    """Bumper distance to the closest perceived agent inside the driving corridor."""
    ego, cfg = world.ego, world.cfg
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    half_len, half_w = cfg.ego_half_extents
    corridor = half_w + cfg.corridor_margin
    eye = (ego.x, ego.y)
    best = math.inf
    for agent in world.agents:
        if ego.distance_to(agent) > world.sensing_range + agent.radius:
            continue
        if not _in_view(ego, agent, cfg.fov_half_angle):
            continue
        rel = [(px - ego.x, py - ego.y) for px, py in agent.corners()]
        lon = [dx * c + dy * s for dx, dy in rel]
        lat = [dy * c - dx * s for dx, dy in rel]
        if max(lon) <= 0.0 or min(lat) > corridor or max(lat) < -corridor:
            continue
        target = (agent.x, agent.y)
        occluded = any(
            other is not agent and _occludes(other, eye, target) for other in world.agents
        )
        if occluded:
            continue
        best = min(best, max(0.0, min(lon) - half_len))
    return best


def _advance_progress(world: World) -> int:
    pts, ex, ey = world._route_xy, world.ego.x, world.ego.y
    lo = world.progress
    best, best_d = lo, math.inf
    for j in range(lo, min(len(pts), lo + PROGRESS_WINDOW)):
        px, py = pts[j]
        d = (px - ex) * (px - ex) + (py - ey) * (py - ey)
        if d < best_d:
            best, best_d = j, d
    world.progress = best
    return best


def _control_ego(world: World) -> None:
    ego, cfg, dt = world.ego, world.cfg, world.cfg.dt
    idx = _advance_progress(world)
    s = world._route_s

    world._gap_buffer.append(perceived_gap(world))
    gap = world._gap_buffer[0]
    v_gap = math.sqrt(2.0 * cfg.comfort_decel * max(0.0, gap - cfg.standstill_gap))
    v_des = min(cfg.cruise_speed, world._curve_speed[idx], v_gap)
    accel = cfg.speed_gain * (v_des - ego.speed)
    accel = max(-cfg.max_brake * world.friction, min(cfg.max_accel, accel))
    ego.speed = max(0.0, ego.speed + accel * dt)

    lookahead = max(cfg.lookahead_min, cfg.lookahead_gain * ego.speed)
    j = min(bisect_left(s, s[idx] + lookahead), len(s) - 1)
    tx, ty = world._route_xy[j]
    dist = max(math.hypot(tx - ego.x, ty - ego.y), 1e-6)
    alpha = float(wrap_angle(math.atan2(ty - ego.y, tx - ego.x) - ego.heading))
    steer = math.atan2(2.0 * cfg.wheelbase * math.sin(alpha), dist)
    steer = max(-cfg.max_steer, min(cfg.max_steer, steer))
    yaw_rate = ego.speed * math.tan(steer) / cfg.wheelbase
    grip = cfg.lateral_grip * world.friction / max(ego.speed, 0.1)
    yaw_rate = max(-grip, min(grip, yaw_rate))
    ego.turn_to(ego.heading + yaw_rate * dt)
    ego.move(dt)


# === Stepping ===


def _check_contacts(world: World) -> None:
    ego, cfg = world.ego, world.cfg
    window = int(round(cfg.collision_view_window / cfg.dt))
    for agent in world.agents:
        if _in_view(ego, agent, cfg.fov_half_angle):
            world._last_in_view[agent.name] = world.step_index
        touching = ego.distance_to(agent) <= ego.radius + agent.radius and boxes_overlap(
            ego.corners(), agent.corners()
        )
        if not touching:
            world._contacts.discard(agent.name)
            continue
        if agent.name in world._contacts:
            continue
        world._contacts.add(agent.name)
        seen = world._last_in_view.get(agent.name)
        in_fov = seen is not None and world.step_index - seen <= window
        moving = ego.speed >= cfg.min_impact_speed
        if in_fov and moving and world.violation is None:
            world.violation = Violation(
                kind="collision",
                step=world.step_index,
                other_kind=agent.kind,
                other_name=agent.name,
                ego_speed_at_impact=float(ego.speed),
                bearing_in_fov=True,
            )
        else:
            reason = "outside_view" if not in_fov else "ego_stopped"
            world.events.append(
                ContactEvent(
                    world.step_index, agent.name, agent.kind, float(ego.speed), in_fov, reason
                )
            )


def _check_road(world: World) -> None:
    """Flag wrong-lane driving, or leaving the road by more than half the ego width."""
    if world.violation is not None:
        return
    x, y = world.ego.x, world.ego.y
    if world.road_map.opposite_at(x, y):
        sub_kind = "wronglane"
    elif world.road_map.distance_beyond_road(x, y) > world.cfg.ego_half_extents[1]:
        sub_kind = "offroad"
    else:
        return
    world.violation = Violation(kind="out_of_road", step=world.step_index, sub_kind=sub_kind)


def _reached_goal(world: World) -> bool:
    gx, gy = world._route_xy[-1]
    return math.hypot(world.ego.x - gx, world.ego.y - gy) <= world.cfg.goal_tolerance


def step(world: World, dt: Optional[float] = None) -> World:
    """Advance the world by one fixed tick."""
    if world.done:
        return world
    dt = world.cfg.dt if dt is None else dt
    if not math.isclose(dt, world.cfg.dt):
        raise ValueError(f"step size is fixed at {world.cfg.dt}, got {dt}")

    world.step_index += 1
    _control_ego(world)
    for agent in world.agents:
        update_npc(agent, world.ego, world.agents, world.cfg, dt)
    _check_contacts(world)
    _check_road(world)

    if world.violation is not None:
        world.termination = "violation"
    elif _reached_goal(world):
        world.termination = "destination_reached"
    elif world.step_index >= world.cfg.max_steps:
        world.termination = "timeout"
    return world


def run(
    schema: SearchSpaceSchema,
    v: np.ndarray,
    max_steps: Optional[int] = None,
    seed: int = 0,
    cfg: Optional[SimConfig] = None,
) -> SimulationOutcome:
    """Simulate one specific scenario until violation, destination or timeout.

    The kernel has no stochastic elements; ``seed`` is carried into the outcome so logs
    record the full tuple an outcome is a function of.
    """
    cfg = cfg or SimConfig()
    if max_steps is not None:
        cfg = replace(cfg, max_steps=int(max_steps))
    world = build_world(schema, v, cfg)
    trace = [world.snapshot()]
    while not world.done:
        step(world)
        trace.append(world.snapshot())
    logger.debug(
        "%s: %s after %d steps (%s)",
        schema.name,
        world.termination,
        world.step_index,
        world.violation.kind if world.violation else "no violation",
    )
    return SimulationOutcome(
        trace=trace,
        violation=world.violation,
        termination=world.termination,
        steps=world.step_index,
        map_id=schema.map_id,
        route=world.reference_route,
        events=list(world.events),
        warnings=list(world.warnings),
        friction=world.friction,
        weather=world.weather,
        seed=int(seed),
    )
