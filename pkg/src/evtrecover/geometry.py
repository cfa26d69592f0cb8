"""Planar shape primitives: circles and convex polygons.

All routines work on plain ``(x, y)`` float tuples.  Intersection queries
report the parameter interval of a segment that lies strictly inside a shape,
which is what both line-of-sight and motion truncation need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

Point = Tuple[float, float]

_EPS = 1e-12


def normalize_angle(angle: float) -> float:
    """Wrap an angle in radians into (-pi, pi]."""
    a = math.remainder(angle, math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


def _closest_on_segment(p: Point, a: Point, b: Point) -> Point:
    dx, dy = b[0] - a[0], b[1] - a[1]
    L2 = dx * dx + dy * dy
    if L2 < _EPS:
        return a
    t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / L2
    t = min(1.0, max(0.0, t))
    return (a[0] + t * dx, a[1] + t * dy)


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    c = _closest_on_segment(p, a, b)
    return math.hypot(p[0] - c[0], p[1] - c[1])


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"circle radius must be positive, got {self.radius}")

    @property
    def reference_point(self) -> Point:
        return self.center

    def contains(self, p: Point) -> bool:
        """Strict interior test."""
        return math.hypot(p[0] - self.center[0], p[1] - self.center[1]) < self.radius

    def distance(self, p: Point) -> float:
        """Distance from ``p`` to the shape (0 inside)."""
        return max(0.0, math.hypot(p[0] - self.center[0], p[1] - self.center[1]) - self.radius)

    def signed_depth(self, p: Point) -> float:
        """Positive inside, negative outside; magnitude is distance to the boundary."""
        return self.radius - math.hypot(p[0] - self.center[0], p[1] - self.center[1])

    def segment_interval(self, p0: Point, p1: Point) -> Optional[Tuple[float, float]]:
        """Parameter interval ``(t_in, t_out)`` of ``p0 + t (p1 - p0)`` inside the disc.

        The interval is clipped to [0, 1]; ``None`` when the segment misses the
        open disc (tangency counts as a miss).
        """
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        fx, fy = p0[0] - self.center[0], p0[1] - self.center[1]
        a = dx * dx + dy * dy
        c = fx * fx + fy * fy - self.radius * self.radius
        if a < _EPS:
            return (0.0, 1.0) if c < 0 else None
        b = 2.0 * (fx * dx + fy * dy)
        disc = b * b - 4.0 * a * c
        if disc <= 0:
            return None
        root = math.sqrt(disc)
        t0 = (-b - root) / (2.0 * a)
        t1 = (-b + root) / (2.0 * a)
        lo, hi = max(t0, 0.0), min(t1, 1.0)
        if lo >= hi:
            return None
        return (lo, hi)

    def intersects_sector(self, apex: Point, heading: float, radius: float, half_angle: float) -> bool:
        cx, cy = self.center
        d = math.hypot(cx - apex[0], cy - apex[1])
        if d < self.radius:
            return True
        bearing = normalize_angle(math.atan2(cy - apex[1], cx - apex[0]) - heading)
        if abs(bearing) <= half_angle and d < radius + self.radius:
            return True
        for side in (-1.0, 1.0):
            ang = heading + side * half_angle
            end = (apex[0] + radius * math.cos(ang), apex[1] + radius * math.sin(ang))
            if point_segment_distance(self.center, apex, end) < self.radius:
                return True
        return False


@dataclass(frozen=True)
class Polygon:
    """Convex polygon with counter-clockwise vertices."""

    vertices: Tuple[Point, ...]

    def __post_init__(self) -> None:
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise ValueError("polygon needs at least 3 vertices")
        for i in range(n):
            a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= 0:
                raise ValueError("polygon must be strictly convex and counter-clockwise")

    @property
    def edges(self):
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    @property
    def reference_point(self) -> Point:
        n = len(self.vertices)
        return (sum(v[0] for v in self.vertices) / n, sum(v[1] for v in self.vertices) / n)

    def _edge_depths(self, p: Point):
        # distance of p to each edge line, positive on the interior side
        for a, b in self.edges:
            ex, ey = b[0] - a[0], b[1] - a[1]
            L = math.hypot(ex, ey)
            yield ((p[0] - a[0]) * ey * -1 + (p[1] - a[1]) * ex) / L

    def contains(self, p: Point) -> bool:
        return all(d > 0 for d in self._edge_depths(p))

    def signed_depth(self, p: Point) -> float:
        if self.contains(p):
            return min(self._edge_depths(p))
        return -self.distance(p)

    def distance(self, p: Point) -> float:
        if self.contains(p):
            return 0.0
        return min(point_segment_distance(p, a, b) for a, b in self.edges)

    def segment_interval(self, p0: Point, p1: Point) -> Optional[Tuple[float, float]]:
        """Cyrus-Beck clip of the segment against the open polygon."""
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        lo, hi = 0.0, 1.0
        for a, b in self.edges:
            # inward normal of a CCW edge is (-ey, ex)
            ex, ey = b[0] - a[0], b[1] - a[1]
            nx, ny = -ey, ex
            num = nx * (p0[0] - a[0]) + ny * (p0[1] - a[1])
            den = nx * dx + ny * dy
            # inside this half-plane while num + t*den > 0
            if abs(den) < _EPS:
                if num <= 0:
                    return None
                continue
            t = -num / den
            if den > 0:
                lo = max(lo, t)
            else:
                hi = min(hi, t)
            if lo >= hi:
                return None
        return (lo, hi)

    def intersects_sector(self, apex: Point, heading: float, radius: float, half_angle: float) -> bool:
        if self.contains(apex):
            return True

        def in_sector(q: Point) -> bool:
            d = math.hypot(q[0] - apex[0], q[1] - apex[1])
            if d > radius:
                return False
            if d < _EPS:
                return True
            return abs(normalize_angle(math.atan2(q[1] - apex[1], q[0] - apex[0]) - heading)) <= half_angle

        if any(in_sector(v) for v in self.vertices):
            return True
        for side in (-1.0, 1.0):
            ang = heading + side * half_angle
            end = (apex[0] + radius * math.cos(ang), apex[1] + radius * math.sin(ang))
            if self.segment_interval(apex, end) is not None:
                return True
        return any(in_sector(_closest_on_segment(apex, a, b)) for a, b in self.edges)


Shape = Union[Circle, Polygon]


def rectangle(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    """Axis-aligned box as a CCW polygon."""
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def ray_exit_rect(p: Point, u: Point, bounds: Sequence[float]) -> float:
    """Distance along unit direction ``u`` from ``p`` to the boundary of ``bounds``."""
    x0, y0, x1, y1 = bounds
    best = math.inf
    if u[0] > _EPS:
        best = min(best, (x1 - p[0]) / u[0])
    elif u[0] < -_EPS:
        best = min(best, (x0 - p[0]) / u[0])
    if u[1] > _EPS:
        best = min(best, (y1 - p[1]) / u[1])
    elif u[1] < -_EPS:
        best = min(best, (y0 - p[1]) / u[1])
    return max(0.0, best)
