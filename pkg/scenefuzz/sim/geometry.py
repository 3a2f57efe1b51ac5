"""Planar geometry helpers: oriented boxes, polylines, angles.

The box helpers used every simulation step work on plain float tuples; array inputs
are accepted and converted first.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

_AXES = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])

Point = Tuple[float, float]
Quad = Tuple[Point, Point, Point, Point]


def wrap_angle(a: float | np.ndarray) -> float | np.ndarray:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def box_corners(
    center: np.ndarray, heading: float, half_extents: tuple[float, float]
) -> np.ndarray:
    """Return the four corners of an oriented box, counter-clockwise."""
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    local = _AXES * np.asarray(half_extents, dtype=float)
    return np.asarray(center, dtype=float) + local @ rot.T


def quad(x: float, y: float, heading: float, half_length: float, half_width: float) -> Quad:
    """Corners of an oriented box as float tuples, in the same order as ``box_corners``."""
    c, s = math.cos(heading), math.sin(heading)
    lx, ly = half_length * c, half_length * s
    wx, wy = -half_width * s, half_width * c
    return (
        (x + lx + wx, y + ly + wy),
        (x - lx + wx, y - ly + wy),
        (x - lx - wx, y - ly - wy),
        (x + lx - wx, y + ly - wy),
    )


def _pairs(corners) -> Sequence[Point]:
    return corners.tolist() if isinstance(corners, np.ndarray) else corners


def boxes_overlap(a, b) -> bool:
    """Separating-axis test on two convex quads given as four corners each."""
    a, b = _pairs(a), _pairs(b)
    for q in (a, b):
        for i in range(2):
            ex, ey = q[i + 1][0] - q[i][0], q[i + 1][1] - q[i][1]
            pa = [ey * -px + ex * py for px, py in a]
            pb = [ey * -px + ex * py for px, py in b]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return False
    return True


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    abx, aby = b[0] - a[0], b[1] - a[1]
    denom = abx * abx + aby * aby
    t = 0.0
    if denom > 0.0:
        t = min(1.0, max(0.0, ((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / denom))
    return math.hypot(a[0] + t * abx - p[0], a[1] + t * aby - p[1])


def box_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum Euclidean distance between two convex quads (0 when they overlap)."""
    if boxes_overlap(a, b):
        return 0.0
    a, b = _pairs(a), _pairs(b)
    best = math.inf
    for src, dst in ((a, b), (b, a)):
        for p in src:
            for i in range(4):
                best = min(best, point_segment_distance(p, dst[i], dst[(i + 1) % 4]))
    return best


def point_in_convex(p: Point, corners: Sequence[Point]) -> bool:
    sign = 0.0
    for i in range(len(corners)):
        a, b = corners[i], corners[(i + 1) % len(corners)]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if cross != 0.0:
            if sign == 0.0:
                sign = cross
            elif sign * cross < 0.0:
                return False
    return True


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    return (d1 * d2 < 0.0) and (d3 * d4 < 0.0)


def segment_hits_box(p0: Point, p1: Point, corners: Sequence[Point]) -> bool:
    """Whether the open segment p0-p1 passes through the quad."""
    if point_in_convex(p0, corners) or point_in_convex(p1, corners):
        return True
    return any(_segments_cross(p0, p1, corners[i], corners[(i + 1) % 4]) for i in range(4))


# === Polylines ===


def arc_lengths(points: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def densify(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at (roughly) uniform arc-length spacing, keeping both ends."""
    points = np.asarray(points, dtype=float)
    s = arc_lengths(points)
    total = s[-1]
    if total == 0.0:
        return points[:1].copy()
    n = max(2, int(math.ceil(total / spacing)) + 1)
    targets = np.linspace(0.0, total, n)
    xs = np.interp(targets, s, points[:, 0])
    ys = np.interp(targets, s, points[:, 1])
    return np.column_stack([xs, ys])


def point_at_ratio(points: np.ndarray, ratio: float) -> np.ndarray:
    """Point at the given fraction of the polyline's arc length."""
    points = np.asarray(points, dtype=float)
    s = arc_lengths(points)
    target = float(np.clip(ratio, 0.0, 1.0)) * s[-1]
    return np.array([np.interp(target, s, points[:, 0]), np.interp(target, s, points[:, 1])])


def segment_headings(points: np.ndarray) -> np.ndarray:
    d = np.diff(points, axis=0)
    return np.arctan2(d[:, 1], d[:, 0])


def project_to_polyline(p: np.ndarray, points: np.ndarray) -> tuple[int, float, float]:
    """Closest segment of a polyline to ``p``.

    Returns ``(segment_index, signed_lateral_offset, segment_heading)``; the offset is
    positive on the left of the direction of travel.
    """
    a = points[:-1]
    ab = points[1:] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom > 0.0, denom, 1.0)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
    foot = a + t[:, None] * ab
    dist = np.hypot(*(p - foot).T)
    i = int(np.argmin(dist))
    cross = ab[i, 0] * (p[1] - a[i, 1]) - ab[i, 1] * (p[0] - a[i, 0])
    lateral = float(dist[i]) * (1.0 if cross >= 0.0 else -1.0)
    return i, lateral, float(math.atan2(ab[i, 1], ab[i, 0]))


def polyline_curvature(points: np.ndarray) -> np.ndarray:
    """Unsigned discrete curvature at every vertex (0 at the ends)."""
    n = len(points)
    kappa = np.zeros(n)
    if n < 3:
        return kappa
    a, b, c = points[:-2], points[1:-1], points[2:]
    ab = np.hypot(*(b - a).T)
    bc = np.hypot(*(c - b).T)
    ca = np.hypot(*(a - c).T)
    u, w = b - a, c - a
    cross = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
    denom = ab * bc * ca
    kappa[1:-1] = np.where(denom > 1e-12, 2.0 * cross / np.where(denom > 1e-12, denom, 1.0), 0.0)
    return kappa


def project_points_to_polyline(
    pts: np.ndarray, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized distance of many points to a polyline and the heading of the closest segment."""
    a = points[:-1]
    ab = points[1:] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom > 0.0, denom, 1.0)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("tij,ij->ti", rel, ab) / denom, 0.0, 1.0)
    diff = rel - t[:, :, None] * ab[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    i = np.argmin(dist, axis=1)
    headings = np.arctan2(ab[:, 1], ab[:, 0])
    return dist[np.arange(len(pts)), i], headings[i]


def box_corners_batch(xy: np.ndarray, heading: np.ndarray, half_extents: np.ndarray) -> np.ndarray:
    """Corners of many boxes at once: ``(n, 4, 2)``."""
    c, s = np.cos(heading), np.sin(heading)
    local = _AXES[None, :, :] * np.asarray(half_extents, dtype=float).reshape(-1, 1, 2)
    x = local[..., 0] * c[:, None] - local[..., 1] * s[:, None]
    y = local[..., 0] * s[:, None] + local[..., 1] * c[:, None]
    return np.stack([x, y], axis=-1) + xy[:, None, :]
