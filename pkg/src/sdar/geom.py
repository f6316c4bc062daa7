"""Exact 2-D primitives: oriented rectangles, workspace containment, segment clearance.

All geometry is double precision.  Touching counts as overlapping (conservative:
a spurious dependency edge is harmless, a missed one is not).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EPS = 1e-9

Point = tuple[float, float]


def normalize_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t < 0.0:
        t += 2.0 * math.pi
    return t - math.pi


@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, theta) with theta normalized to [-pi, pi)."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def xy(self) -> Point:
        return (self.x, self.y)

    def almost_equal(self, other: "Pose2", tol: float = EPS) -> bool:
        dth = abs(normalize_angle(self.theta - other.theta))
        return abs(self.x - other.x) <= tol and abs(self.y - other.y) <= tol and dth <= tol


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle with center pose and strictly positive half extents."""

    center: Pose2
    half_width: float
    half_height: float

    def __post_init__(self):
        if not (self.half_width > 0.0 and self.half_height > 0.0):
            raise ValueError("half extents must be strictly positive")

    @property
    def circumradius(self) -> float:
        return math.hypot(self.half_width, self.half_height)

    def axes(self) -> tuple[Point, Point]:
        c, s = math.cos(self.center.theta), math.sin(self.center.theta)
        return (c, s), (-s, c)

    def corners(self) -> list[Point]:
        (ux, uy), (vx, vy) = self.axes()
        cx, cy = self.center.x, self.center.y
        w, h = self.half_width, self.half_height
        return [
            (cx + w * ux + h * vx, cy + w * uy + h * vy),
            (cx - w * ux + h * vx, cy - w * uy + h * vy),
            (cx - w * ux - h * vx, cy - w * uy - h * vy),
            (cx + w * ux - h * vx, cy + w * uy - h * vy),
        ]


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned table rectangle with its origin at the lower-left corner."""

    width: float = 1.0
    height: float = 0.6

    def __post_init__(self):
        if not (self.width > 0.0 and self.height > 0.0):
            raise ValueError("workspace dimensions must be positive")

    @property
    def center(self) -> Point:
        return (self.width / 2.0, self.height / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains_point(self, p: Point, tol: float = EPS) -> bool:
        return -tol <= p[0] <= self.width + tol and -tol <= p[1] <= self.height + tol


def box_at(pose: Pose2, half_width: float, half_height: float) -> OrientedBox:
    return OrientedBox(pose, half_width, half_height)


def _projection_radius(box: OrientedBox, axis: Point) -> float:
    (ux, uy), (vx, vy) = box.axes()
    return box.half_width * abs(axis[0] * ux + axis[1] * uy) + box.half_height * abs(
        axis[0] * vx + axis[1] * vy
    )


def overlaps(a: OrientedBox, b: OrientedBox) -> bool:
    """Closed-rectangle intersection via the separating-axis test over 4 axes."""
    dx = b.center.x - a.center.x
    dy = b.center.y - a.center.y
    reach = a.circumradius + b.circumradius
    if dx * dx + dy * dy > reach * reach + EPS:
        return False
    for axis in a.axes() + b.axes():
        gap = abs(dx * axis[0] + dy * axis[1]) - (
            _projection_radius(a, axis) + _projection_radius(b, axis)
        )
        if gap > EPS:
            return False
    return True


def inside(w: Workspace, b: OrientedBox) -> bool:
    """True iff all four corners lie in the closed workspace rectangle."""
    return all(w.contains_point(p) for p in b.corners())


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    seg_len2 = dx * dx + dy * dy
    if seg_len2 <= EPS * EPS:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / seg_len2
    t = max(0.0, min(1.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def _orient(a: Point, b: Point, c: Point) -> int:
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if v > EPS:
        return 1
    if v < -EPS:
        return -1
    return 0


def _on_segment(a: Point, b: Point, p: Point) -> bool:
    return (
        min(a[0], b[0]) - EPS <= p[0] <= max(a[0], b[0]) + EPS
        and min(a[1], b[1]) - EPS <= p[1] <= max(a[1], b[1]) + EPS
    )


def segments_intersect(p0: Point, p1: Point, q0: Point, q1: Point) -> bool:
    o1 = _orient(p0, p1, q0)
    o2 = _orient(p0, p1, q1)
    o3 = _orient(q0, q1, p0)
    o4 = _orient(q0, q1, p1)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p0, p1, q0):
        return True
    if o2 == 0 and _on_segment(p0, p1, q1):
        return True
    if o3 == 0 and _on_segment(q0, q1, p0):
        return True
    if o4 == 0 and _on_segment(q0, q1, p1):
        return True
    return False


def segment_clearance(p0: Point, p1: Point, q0: Point, q1: Point) -> float:
    """Minimum Euclidean distance between two closed segments (0 iff they intersect)."""
    if segments_intersect(p0, p1, q0, q1):
        return 0.0
    return min(
        point_segment_distance(q0, p0, p1),
        point_segment_distance(q1, p0, p1),
        point_segment_distance(p0, q0, q1),
        point_segment_distance(p1, q0, q1),
    )


def box_clearance(a: OrientedBox, b: OrientedBox) -> float:
    """Exact distance between two closed rectangles (0 if they overlap)."""
    if overlaps(a, b):
        return 0.0
    ca, cb = a.corners(), b.corners()
    best = math.inf
    for i in range(4):
        for j in range(4):
            d = segment_clearance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])
            if d < best:
                best = d
    return best


def boxes_closer_than(a: OrientedBox, b: OrientedBox, gap: float) -> bool:
    """True iff the rectangles overlap or their gap is below `gap`."""
    dx = b.center.x - a.center.x
    dy = b.center.y - a.center.y
    reach = a.circumradius + b.circumradius + gap
    if dx * dx + dy * dy > reach * reach:
        return False
    if overlaps(a, b):
        return True
    ca, cb = a.corners(), b.corners()
    for i in range(4):
        for j in range(4):
            if segment_clearance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) < gap:
                return True
    return False


# Minimum free gap kept between distinct footprints in generated arrangements
# and sampled buffer poses: finger pads extend 0.02 beyond a face, so any
# smaller gap would make an object between two neighbors ungraspable.
MIN_GAP = 0.022


def point_box_distance(p: Point, box: OrientedBox) -> float:
    """Distance from a point to a closed oriented rectangle (0 inside)."""
    (ux, uy), (vx, vy) = box.axes()
    dx, dy = p[0] - box.center.x, p[1] - box.center.y
    lx = dx * ux + dy * uy
    ly = dx * vx + dy * vy
    ox = max(abs(lx) - box.half_width, 0.0)
    oy = max(abs(ly) - box.half_height, 0.0)
    return math.hypot(ox, oy)


def dist(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])
