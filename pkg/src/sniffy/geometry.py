"""Exact 2D primitives: vectors, segments, ray casting and rotations.

The simulator describes both the world and the laser beams as line segments,
so everything here is a handful of cross products.  Functions are pure and
operate on immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_MAX_RANGE = 4.0
_PARALLEL_EPS = 1e-12


@dataclass(frozen=True, slots=True)
class Vec2:
    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> "Vec2":
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        # sqrt of the sum of squares, not math.hypot: the compiled core uses the
        # same expression so both backends round identically
        return math.sqrt(self.x * self.x + self.y * self.y)

    def unit(self) -> "Vec2":
        n = self.norm()
        if n == 0.0:
            return Vec2(0.0, 0.0)
        return Vec2(self.x / n, self.y / n)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


ZERO = Vec2(0.0, 0.0)


@dataclass(frozen=True, slots=True)
class Segment:
    a: Vec2
    b: Vec2

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"degenerate segment at {self.a}")

    def length(self) -> float:
        return (self.b - self.a).norm()


@dataclass(frozen=True, slots=True)
class Ray:
    origin: Vec2
    direction: Vec2
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self) -> None:
        if abs(self.direction.norm() - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


def ray_segment_distance(ray: Ray, seg: Segment) -> Optional[float]:
    """Distance along ``ray`` to ``seg``, or None when there is no hit in range.

    A ray collinear with the segment reports the nearest point of overlap.
    """
    o, d = ray.origin, ray.direction
    e = seg.b - seg.a
    ao = seg.a - o
    denom = d.cross(e)
    if abs(denom) <= _PARALLEL_EPS * max(1.0, e.norm()):
        if abs(ao.cross(d)) > _PARALLEL_EPS * max(1.0, ao.norm()):
            return None
        ta = ao.dot(d)
        tb = (seg.b - o).dot(d)
        lo, hi = min(ta, tb), max(ta, tb)
        if hi < 0.0:
            return None
        t = 0.0 if lo <= 0.0 else lo
        return t if t <= ray.max_range else None
    t = ao.cross(e) / denom
    s = ao.cross(d) / denom
    if t < 0.0 or s < 0.0 or s > 1.0 or t > ray.max_range:
        return None
    return t


def raycast(ray: Ray, segments: Iterable[Segment]) -> float:
    """Nearest hit distance, saturating at ``ray.max_range`` when nothing is hit."""
    best = ray.max_range
    for seg in segments:
        t = ray_segment_distance(ray, seg)
        if t is not None and t < best:
            best = t
    return best


def rotate(v: Vec2, angle: float) -> Vec2:
    c, s = math.cos(angle), math.sin(angle)
    return Vec2(c * v.x - s * v.y, s * v.x + c * v.y)


def segments_intersect(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> bool:
    """Closed intersection test between segments pq and ab (touching counts)."""
    return bool(
        segments_intersect_array(
            np.array([p.x, p.y, q.x, q.y], dtype=float)[None, :],
            np.array([[a.x, a.y, b.x, b.y]], dtype=float),
        )[0]
    )


def segments_intersect_array(moves: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """For each row ``(x0, y0, x1, y1)`` of ``moves``, whether it touches any wall.

    ``walls`` has the same row layout.  Returns a boolean array of len(moves).
    """
    moves = np.asarray(moves, dtype=float)
    walls = np.asarray(walls, dtype=float)
    if len(walls) == 0 or len(moves) == 0:
        return np.zeros(len(moves), dtype=bool)
    px, py = moves[:, 0:1], moves[:, 1:2]
    rx, ry = moves[:, 2:3] - px, moves[:, 3:4] - py
    ax, ay = walls[None, :, 0], walls[None, :, 1]
    sx, sy = walls[None, :, 2] - ax, walls[None, :, 3] - ay
    denom = rx * sy - ry * sx
    qpx, qpy = ax - px, ay - py
    t_num = qpx * sy - qpy * sx
    u_num = qpx * ry - qpy * rx
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / denom
        u = u_num / denom
    proper = (denom != 0.0) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
    # collinear overlap
    colinear = (denom == 0.0) & (t_num == 0.0)
    if np.any(colinear):
        rr = rx * rx + ry * ry
        ss = sx * sx + sy * sy
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = np.where(rr > 0, (qpx * rx + qpy * ry) / rr, 0.0)
            t1 = np.where(rr > 0, t0 + (sx * rx + sy * ry) / rr, 0.0)
        lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
        overlap = colinear & (hi >= 0.0) & (lo <= 1.0) & ((rr > 0) | (ss > 0))
        proper |= overlap
    return proper.any(axis=1)


# Laser layout under constant yaw.  Index k points along AXES[k]; the repulsion
# direction for laser k is rotate(i, (k + 2) / 2 * pi) which equals -AXES[k].
AXES: tuple[Vec2, ...] = (Vec2(1.0, 0.0), Vec2(0.0, 1.0), Vec2(-1.0, 0.0), Vec2(0.0, -1.0))


def walls_to_array(segments: Sequence[Segment]) -> np.ndarray:
    if not segments:
        return np.zeros((0, 4), dtype=float)
    return np.array([[s.a.x, s.a.y, s.b.x, s.b.y] for s in segments], dtype=float)


def cast_lasers(x: float, y: float, walls: np.ndarray, max_range: float = DEFAULT_MAX_RANGE) -> list[float]:
    """Four axis-aligned laser readings from ``(x, y)`` against a wall array.

    Specialised version of :func:`raycast` for the world-aligned lasers; the
    compiled core mirrors this arithmetic exactly.
    """
    out = [max_range, max_range, max_range, max_range]
    for i in range(walls.shape[0]):
        ax, ay, bx, by = walls[i, 0], walls[i, 1], walls[i, 2], walls[i, 3]
        for k in range(4):
            t = _axis_hit(x, y, k, ax, ay, bx, by, max_range)
            if t < out[k]:
                out[k] = t
    return out


def move_crosses_wall(x0: float, y0: float, x1: float, y1: float, walls: np.ndarray) -> bool:
    """Whether the straight move (x0, y0) -> (x1, y1) crosses a wall (parallel walls ignored).

    Scalar twin of :func:`segments_intersect_array` used by the simulator to
    catch moves that slip past the axis-aligned lasers at wall corners.
    """
    rx = x1 - x0
    ry = y1 - y0
    for i in range(walls.shape[0]):
        ax, ay = walls[i, 0], walls[i, 1]
        sx = walls[i, 2] - ax
        sy = walls[i, 3] - ay
        denom = rx * sy - ry * sx
        if denom == 0.0:
            continue
        qpx = ax - x0
        qpy = ay - y0
        t = (qpx * sy - qpy * sx) / denom
        u = (qpx * ry - qpy * rx) / denom
        if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
            return True
    return False


def _axis_hit(x, y, k, ax, ay, bx, by, max_range):
    # Returns max_range + 1 when there is no hit.
    miss = max_range + 1.0
    if k == 0 or k == 2:
        sign = 1.0 if k == 0 else -1.0
        if ay == by:
            if ay != y:
                return miss
            ta = (ax - x) * sign
            tb = (bx - x) * sign
            lo = ta if ta < tb else tb
            hi = tb if ta < tb else ta
            if hi < 0.0:
                return miss
            t = 0.0 if lo <= 0.0 else lo
            return t if t <= max_range else miss
        s = (y - ay) / (by - ay)
        if s < 0.0 or s > 1.0:
            return miss
        t = (ax + s * (bx - ax) - x) * sign
    else:
        sign = 1.0 if k == 1 else -1.0
        if ax == bx:
            if ax != x:
                return miss
            ta = (ay - y) * sign
            tb = (by - y) * sign
            lo = ta if ta < tb else tb
            hi = tb if ta < tb else ta
            if hi < 0.0:
                return miss
            t = 0.0 if lo <= 0.0 else lo
            return t if t <= max_range else miss
        s = (x - ax) / (bx - ax)
        if s < 0.0 or s > 1.0:
            return miss
        t = (ay + s * (by - ay) - y) * sign
    if t < 0.0 or t > max_range:
        return miss
    return t
