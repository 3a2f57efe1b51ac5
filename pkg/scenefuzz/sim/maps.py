"""Built-in road maps rasterized onto a metric grid with distance fields."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from matplotlib.path import Path as MplPath
from scipy import ndimage

from ..constants import MAP_RESOLUTION
from .geometry import densify, segment_headings

logger = logging.getLogger(__name__)

LANE_WIDTH = 4.0
JUNCTION_HALF = 8.0
ARM_LENGTH = 60.0
MAP_MARGIN = 5.0
OPPOSITE_DOT = -0.5


class MapError(ValueError):
    """Raised for unknown maps or routes that leave the drivable region."""


@dataclass(frozen=True)
class Lane:
    name: str
    start: tuple[float, float]
    end: tuple[float, float]
    width: float = LANE_WIDTH
    is_opposite: bool = False

    @property
    def centerline(self) -> np.ndarray:
        return np.array([self.start, self.end], dtype=float)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.end, self.start)
        return d / np.hypot(*d)

    def polygon(self) -> np.ndarray:
        d = self.direction
        n = np.array([-d[1], d[0]]) * (0.5 * self.width)
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        return np.array([a - n, b - n, b + n, a + n])


def _box(xmin: float, xmax: float, ymin: float, ymax: float) -> np.ndarray:
    return np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]], dtype=float)


# === Map layouts ===
# Right-hand traffic, lanes 4 m wide, centerlines 2 m either side of the road axis.


def _straight_road() -> tuple[list[Lane], list[np.ndarray]]:
    lanes = [
        Lane("east_inner", (-20.0, -2.0), (180.0, -2.0)),
        Lane("east_outer", (-20.0, -6.0), (180.0, -6.0)),
        Lane("west", (180.0, 2.0), (-20.0, 2.0)),
    ]
    return lanes, []


def _arm_lanes(name: str, axis: np.ndarray) -> list[Lane]:
    """Inbound and outbound lanes of one junction arm pointing along ``axis``."""
    left = np.array([-axis[1], axis[0]])
    near, far = JUNCTION_HALF * axis, (JUNCTION_HALF + ARM_LENGTH) * axis
    outbound_off, inbound_off = -0.5 * LANE_WIDTH * left, 0.5 * LANE_WIDTH * left
    return [
        Lane(f"{name}_out", tuple(near + outbound_off), tuple(far + outbound_off)),
        Lane(f"{name}_in", tuple(far + inbound_off), tuple(near + inbound_off)),
    ]


_ARMS = {
    "east": np.array([1.0, 0.0]),
    "north": np.array([0.0, 1.0]),
    "west": np.array([-1.0, 0.0]),
    "south": np.array([0.0, -1.0]),
}


def _t_junction() -> tuple[list[Lane], list[np.ndarray]]:
    lanes = []
    for name in ("east", "west", "south"):
        lanes += _arm_lanes(name, _ARMS[name])
    return lanes, [_box(-JUNCTION_HALF, JUNCTION_HALF, -JUNCTION_HALF, 0.5 * LANE_WIDTH * 2)]


def _crossing() -> tuple[list[Lane], list[np.ndarray]]:
    lanes = []
    for name, axis in _ARMS.items():
        lanes += _arm_lanes(name, axis)
    h = JUNCTION_HALF
    return lanes, [_box(-h, h, -h, h)]


MAP_LAYOUTS = {
    "straight_road": _straight_road,
    "t_junction": _t_junction,
    "crossing": _crossing,
}


@dataclass(eq=False)
class RoadMap:
    """Lane geometry plus grid masks and Euclidean distance fields.

    Grids are indexed ``[ix, iy]``; cell ``(ix, iy)`` has its center at
    ``origin + (ix + 0.5, iy + 0.5) * resolution``.
    """

    name: str
    lanes: tuple[Lane, ...]
    junctions: tuple[np.ndarray, ...]
    origin: np.ndarray
    resolution: float
    drivable: np.ndarray
    opposite: np.ndarray
    _offroad: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    _wronglane: Optional[tuple[np.ndarray, np.ndarray]] = field(repr=False, default=None)
    _to_drivable: np.ndarray = field(repr=False, default=None)
    _beyond: np.ndarray = field(repr=False, default=None)

    def __post_init__(self) -> None:
        res = self.resolution
        self._x0, self._y0 = float(self.origin[0]), float(self.origin[1])
        self._offroad = ndimage.distance_transform_edt(
            self.drivable, sampling=res, return_indices=True
        )
        if self.opposite.any():
            self._wronglane = ndimage.distance_transform_edt(
                ~self.opposite, sampling=res, return_indices=True
            )
        to_road, self._to_drivable = ndimage.distance_transform_edt(
            ~self.drivable, sampling=res, return_indices=True
        )
        # Center-to-center distances overshoot the road edge by half a cell.
        self._beyond = np.maximum(to_road - 0.5 * res, 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.drivable.shape

    @property
    def extent(self) -> tuple[float, float, float, float]:
        nx, ny = self.shape
        x0, y0 = self.origin
        return (x0, x0 + nx * self.resolution, y0, y0 + ny * self.resolution)

    def _cells(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor((pts - self.origin) / self.resolution).astype(int)
        nx, ny = self.shape
        inside = (idx[:, 0] >= 0) & (idx[:, 0] < nx) & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
        ix = np.clip(idx[:, 0], 0, nx - 1)
        iy = np.clip(idx[:, 1], 0, ny - 1)
        return ix, iy, inside

    def _centers(self, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
        return self.origin + (np.column_stack([ix, iy]) + 0.5) * self.resolution

    def cell(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """Grid cell of a single point, or None outside the grid."""
        ix = math.floor((x - self._x0) / self.resolution)
        iy = math.floor((y - self._y0) / self.resolution)
        nx, ny = self.drivable.shape
        if 0 <= ix < nx and 0 <= iy < ny:
            return ix, iy
        return None

    def distance_beyond_road(self, x: float, y: float) -> float:
        """How far a point lies past the drivable boundary (0 on the road, inf off the grid)."""
        cell = self.cell(x, y)
        return math.inf if cell is None else float(self._beyond[cell])

    def opposite_at(self, x: float, y: float) -> bool:
        cell = self.cell(x, y)
        return cell is not None and bool(self.opposite[cell])

    def in_bounds(self, points: np.ndarray) -> np.ndarray:
        return self._cells(points)[2]

    def is_drivable(self, points: np.ndarray) -> np.ndarray:
        ix, iy, inside = self._cells(points)
        return self.drivable[ix, iy] & inside

    def in_opposite_lane(self, points: np.ndarray) -> np.ndarray:
        ix, iy, inside = self._cells(points)
        return self.opposite[ix, iy] & inside

    def offroad_distance(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to, and nearest point of, the non-drivable region (0 when off-road)."""
        ix, iy, inside = self._cells(points)
        dist, idx = self._offroad
        d = np.where(inside, dist[ix, iy], 0.0)
        nearest = self._centers(idx[0, ix, iy], idx[1, ix, iy])
        return d, nearest

    def wronglane_distance(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to, and nearest point of, any opposite-direction lane."""
        ix, iy, _ = self._cells(points)
        if self._wronglane is None:
            n = len(ix)
            return np.full(n, math.inf), np.full((n, 2), np.nan)
        dist, idx = self._wronglane
        return dist[ix, iy], self._centers(idx[0, ix, iy], idx[1, ix, iy])

    def nearest_drivable(self, point: np.ndarray) -> np.ndarray:
        ix, iy, inside = self._cells(point)
        if inside[0] and self.drivable[ix[0], iy[0]]:
            return np.asarray(point, dtype=float).copy()
        return self._centers(self._to_drivable[0, ix, iy], self._to_drivable[1, ix, iy])[0]


def _rasterize(polygons: list[np.ndarray], centers: np.ndarray, shape: tuple[int, int]):
    mask = np.zeros(len(centers), dtype=bool)
    for poly in polygons:
        mask |= MplPath(poly).contains_points(centers)
    return mask.reshape(shape)


def _mark_opposite(lanes: list[Lane], route: np.ndarray) -> list[Lane]:
    if len(route) < 2:
        return lanes
    dense = densify(route, 1.0)
    headings = segment_headings(dense)
    mids = 0.5 * (dense[:-1] + dense[1:])
    marked = []
    for lane in lanes:
        mid = lane.centerline.mean(axis=0)
        j = int(np.argmin(np.hypot(*(mids - mid).T)))
        route_dir = np.array([math.cos(headings[j]), math.sin(headings[j])])
        opposite = float(lane.direction @ route_dir) < OPPOSITE_DOT
        marked.append(Lane(lane.name, lane.start, lane.end, lane.width, opposite))
    return marked


@lru_cache(maxsize=32)
def _build_map(map_id: str, route: tuple[tuple[float, float], ...], resolution: float) -> RoadMap:
    if map_id not in MAP_LAYOUTS:
        raise MapError(f"unknown map {map_id!r}; choose from {sorted(MAP_LAYOUTS)}")
    lanes, junctions = MAP_LAYOUTS[map_id]()
    lanes = _mark_opposite(lanes, np.asarray(route, dtype=float).reshape(-1, 2))

    polys = [lane.polygon() for lane in lanes] + list(junctions)
    corners = np.vstack(polys)
    lo = np.floor(corners.min(axis=0) - MAP_MARGIN)
    hi = np.ceil(corners.max(axis=0) + MAP_MARGIN)
    nx, ny = (int(v) for v in np.ceil((hi - lo) / resolution))
    gx = lo[0] + (np.arange(nx) + 0.5) * resolution
    gy = lo[1] + (np.arange(ny) + 0.5) * resolution
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    centers = np.column_stack([xx.ravel(), yy.ravel()])

    drivable = _rasterize(polys, centers, (nx, ny))
    junction_mask = _rasterize(list(junctions), centers, (nx, ny))
    opposite = _rasterize([ln.polygon() for ln in lanes if ln.is_opposite], centers, (nx, ny))
    opposite &= ~junction_mask

    road_map = RoadMap(
        name=map_id,
        lanes=tuple(lanes),
        junctions=tuple(junctions),
        origin=lo,
        resolution=resolution,
        drivable=drivable,
        opposite=opposite,
    )
    logger.debug("built map %s: grid %dx%d, %d lanes", map_id, nx, ny, len(lanes))
    return road_map


def load_map(
    map_id: str,
    route: tuple[tuple[float, float], ...] = (),
    resolution: float = MAP_RESOLUTION,
) -> RoadMap:
    """Build (or fetch from cache) a map with lanes marked opposite relative to ``route``."""
    route = tuple((float(x), float(y)) for x, y in route)
    road_map = _build_map(map_id, route, float(resolution))
    if route:
        bad = ~road_map.is_drivable(np.asarray(route))
        if bad.any():
            first = route[int(np.argmax(bad))]
            raise MapError(f"{map_id}: ego route waypoint {first} is not drivable")
    return road_map
