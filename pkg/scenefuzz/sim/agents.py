"""Agents of the micro-simulator and the scripted behaviour of the non-ego ones."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Quad, box_corners, boxes_overlap, quad, wrap_angle

EGO = "ego"
VEHICLE = "npc_vehicle"
PEDESTRIAN = "pedestrian"
STATIC = "static"

ARRIVAL_TOLERANCE = 1.0


class AgentState(NamedTuple):
    """Immutable per-step snapshot stored in traces."""

    name: str
    kind: str
    x: float
    y: float
    heading: float
    speed: float
    half_length: float
    half_width: float
    triggered: bool
    traveled: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def corners(self) -> np.ndarray:
        return box_corners(self.position, self.heading, (self.half_length, self.half_width))


@dataclass
class Agent:
    name: str
    kind: str
    x: float
    y: float
    heading: float
    half_extents: tuple[float, float]
    speed: float = 0.0
    type_index: int = 0
    color: int = 0
    # Trigger behaviour
    trigger_distance: float = math.inf
    target_speed: float = 0.0
    travel_distance: float = math.inf
    waypoint_follower: bool = False
    avoid_collision: bool = False
    target: Optional[tuple[float, float, float]] = None
    initial_speed: float = 0.0
    # Runtime
    triggered: bool = False
    traveled: float = 0.0
    finished: bool = False
    radius: float = field(default=0.0, init=False, repr=False)
    _corners: Optional[Quad] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.x, self.y = float(self.x), float(self.y)
        self.heading = float(self.heading)
        self.half_extents = (float(self.half_extents[0]), float(self.half_extents[1]))
        self.radius = math.hypot(*self.half_extents)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Agent") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def corners(self) -> Quad:
        if self._corners is None:
            self._corners = quad(self.x, self.y, self.heading, *self.half_extents)
        return self._corners

    def move(self, dt: float) -> None:
        step = self.speed * dt
        if step:
            self.x += step * math.cos(self.heading)
            self.y += step * math.sin(self.heading)
            self._corners = None
            if self.triggered:
                self.traveled += step

    def turn_to(self, heading: float) -> None:
        self.heading = float(wrap_angle(heading))
        self._corners = None

    def state(self) -> AgentState:
        return AgentState(
            self.name,
            self.kind,
            self.x,
            self.y,
            self.heading,
            float(self.speed),
            self.half_extents[0],
            self.half_extents[1],
            self.triggered,
            float(self.traveled),
        )


def _approach(current: float, desired: float, accel: float, decel: float, dt: float) -> float:
    if desired >= current:
        return min(desired, current + accel * dt)
    return max(desired, current - decel * dt)


def _predicted_overlap(agent: Agent, other: Agent, horizon: float, dt: float) -> bool:
    """Whether both boxes, extrapolated at constant velocity, touch within ``horizon``."""
    reach = agent.radius + other.radius
    if agent.distance_to(other) > (agent.speed + other.speed) * horizon + reach:
        return False
    ax, ay = agent.speed * math.cos(agent.heading), agent.speed * math.sin(agent.heading)
    bx, by = other.speed * math.cos(other.heading), other.speed * math.sin(other.heading)
    rx, ry = other.x - agent.x, other.y - agent.y
    n = max(1, int(round(horizon / dt)))
    for k in range(1, n + 1):
        t = k * dt
        if math.hypot(rx + (bx - ax) * t, ry + (by - ay) * t) > reach:
            continue
        a = quad(agent.x + ax * t, agent.y + ay * t, agent.heading, *agent.half_extents)
        b = quad(other.x + bx * t, other.y + by * t, other.heading, *other.half_extents)
        if boxes_overlap(a, b):
            return True
    return False


def update_npc(agent: Agent, ego: Agent, others: list[Agent], cfg, dt: float) -> None:
    """Advance one scripted agent by ``dt``.

    Vehicles drive along their yaw at the initial speed until the ego comes within the
    trigger distance; afterwards they either go straight at the target speed for the travel
    distance or steer toward their target waypoint. Pedestrians stand still until triggered.
    """
    if agent.kind == STATIC:
        return

    if not agent.triggered and agent.distance_to(ego) <= agent.trigger_distance:
        agent.triggered = True

    if agent.kind == PEDESTRIAN:
        desired = agent.target_speed if agent.triggered and not agent.finished else 0.0
        accel = decel = cfg.pedestrian_max_accel
    else:
        accel, decel = cfg.max_accel, cfg.max_brake
        if not agent.triggered:
            desired = agent.initial_speed
        elif agent.finished:
            desired = 0.0
        else:
            desired = agent.target_speed
            if agent.waypoint_follower and agent.target is not None:
                _steer_to_target(agent, cfg, dt)
                desired = 0.0 if agent.finished else desired
        if agent.avoid_collision and desired > 0.0:
            for other in [ego, *others]:
                if other is not agent and _predicted_overlap(agent, other, cfg.avoid_horizon, dt):
                    desired = 0.0
                    break

    agent.speed = _approach(agent.speed, desired, accel, decel, dt)
    agent.move(dt)
    if (
        agent.triggered
        and not agent.finished
        and not agent.waypoint_follower
        and agent.traveled >= agent.travel_distance
    ):
        agent.finished = True


def _steer_to_target(agent: Agent, cfg, dt: float) -> None:
    tx, ty, tyaw = agent.target
    dx, dy = tx - agent.x, ty - agent.y
    if math.hypot(dx, dy) <= max(ARRIVAL_TOLERANCE, agent.speed * dt):
        agent.turn_to(tyaw)
        agent.finished = True
        return
    err = float(wrap_angle(math.atan2(dy, dx) - agent.heading))
    limit = cfg.npc_max_yaw_rate * dt
    agent.turn_to(agent.heading + max(-limit, min(limit, err)))
