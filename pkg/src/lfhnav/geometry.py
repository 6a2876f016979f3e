"""
Exact planar geometry shared by the simulator, the hallucination engine and
the navigation stack.

Obstacle and free-space regions are unions of three convex primitives
(disc, stadium, circular segment). Every query here is analytic: ray
intersections are solved per primitive and merged, so nothing depends on a
grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple, Union

import numpy as np

Point = Tuple[float, float]

COLLINEAR_AREA = 1e-9
_EPS = 1e-12


class DegenerateChord(ValueError):
    """Raised when the two chord endpoints coincide."""


class EmptyTrajectory(ValueError):
    """Raised when a swept corridor is requested for zero configurations."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    w = np.remainder(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)


@dataclass(frozen=True)
class Configuration:
    """Planar pose. ``psi`` is wrapped to (-pi, pi] on construction."""

    x: float
    y: float
    psi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.psi)):
            raise ValueError(f"non-finite configuration {self!r}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    @property
    def xy(self) -> Point:
        return (self.x, self.y)

    def mirrored(self) -> "Configuration":
        """Reflection across the x-axis."""
        return Configuration(self.x, -self.y, -self.psi)

    def to_local(self, px: float, py: float) -> Point:
        """Express a world point in this pose's frame."""
        dx, dy = px - self.x, py - self.y
        c, s = math.cos(self.psi), math.sin(self.psi)
        return (c * dx + s * dy, -s * dx + c * dy)


@dataclass(frozen=True)
class Disc:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")


@dataclass(frozen=True)
class Stadium:
    """Minkowski sum of the segment a-b with a disc of ``radius``."""

    a: Point
    b: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("stadium radius must be positive")


@dataclass(frozen=True)
class CircularSegment:
    """Part of a disc cut off by the chord p-q.

    ``side`` is +1 when the segment lies to the left of the directed chord
    p->q and -1 when it lies to the right.
    """

    center: Point
    radius: float
    p: Point
    q: Point
    side: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("segment radius must be positive")
        if self.side not in (-1, 1):
            raise ValueError("side must be +1 or -1")
        for e in (self.p, self.q):
            d = math.hypot(e[0] - self.center[0], e[1] - self.center[1])
            if abs(d - self.radius) > 1e-9:
                raise ValueError("chord endpoint is not on the circle")


Primitive = Union[Disc, Stadium, CircularSegment]


@dataclass(frozen=True)
class Region:
    """Closed union of primitives. The empty tuple is the empty region."""

    primitives: Tuple[Primitive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def __len__(self):
        return len(self.primitives)

    @property
    def is_empty(self) -> bool:
        return not self.primitives

    def union(self, other: "Region") -> "Region":
        return Region(self.primitives + other.primitives)

    def mirrored(self) -> "Region":
        """Reflection of every primitive across the x-axis."""
        out = []
        for pr in self.primitives:
            if isinstance(pr, Disc):
                out.append(Disc((pr.center[0], -pr.center[1]), pr.radius))
            elif isinstance(pr, Stadium):
                out.append(Stadium((pr.a[0], -pr.a[1]), (pr.b[0], -pr.b[1]), pr.radius))
            else:
                out.append(CircularSegment((pr.center[0], -pr.center[1]), pr.radius,
                                           (pr.p[0], -pr.p[1]), (pr.q[0], -pr.q[1]), -pr.side))
        return Region(tuple(out))

    # packed arrays for vectorized queries
    @cached_property
    def _discs(self) -> np.ndarray:
        rows = [(p.center[0], p.center[1], p.radius) for p in self.primitives if isinstance(p, Disc)]
        return np.array(rows, dtype=float).reshape(-1, 3)

    @cached_property
    def _stadiums(self) -> np.ndarray:
        rows = [(p.a[0], p.a[1], p.b[0], p.b[1], p.radius)
                for p in self.primitives if isinstance(p, Stadium)]
        return np.array(rows, dtype=float).reshape(-1, 5)

    @cached_property
    def _stadium_parts(self) -> Tuple[np.ndarray, np.ndarray]:
        """Stadiums split into end discs (shared ends deduplicated) and rectangles."""
        st = self._stadiums
        if not len(st):
            return np.empty((0, 3)), np.empty((0, 6))
        ends = np.vstack([st[:, [0, 1, 4]], st[:, [2, 3, 4]]])
        discs = np.unique(ends, axis=0)
        L = np.hypot(st[:, 2] - st[:, 0], st[:, 3] - st[:, 1])
        ok = L > 0
        st, L = st[ok], L[ok]
        rects = np.column_stack([st[:, 0], st[:, 1], (st[:, 2] - st[:, 0]) / L,
                                 (st[:, 3] - st[:, 1]) / L, L, st[:, 4]])
        return discs, rects

    @cached_property
    def _segments(self) -> np.ndarray:
        rows = [(p.center[0], p.center[1], p.radius, p.p[0], p.p[1], p.q[0], p.q[1], p.side)
                for p in self.primitives if isinstance(p, CircularSegment)]
        return np.array(rows, dtype=float).reshape(-1, 8)

    def contains(self, points) -> np.ndarray:
        """Closed membership test for an (..., 2) array of points."""
        pts = np.asarray(points, dtype=float)
        return self.distance(pts) <= 0.0

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the region (0 inside).

        Returns +inf for the empty region.
        """
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        p = pts.reshape(-1, 2)
        best = np.full(p.shape[0], np.inf)
        if len(self._discs):
            d = self._discs
            dist = np.hypot(p[:, None, 0] - d[None, :, 0], p[:, None, 1] - d[None, :, 1]) - d[None, :, 2]
            best = np.minimum(best, dist.min(axis=1))
        if len(self._stadiums):
            s = self._stadiums
            dist = point_segment_distance(p[:, None, :], s[None, :, 0:2], s[None, :, 2:4]) - s[None, :, 4]
            best = np.minimum(best, dist.min(axis=1))
        for row in self._segments:
            best = np.minimum(best, _segment_region_distance(p, row))
        return np.maximum(best, 0.0).reshape(shape)


def point_segment_distance(p, a, b) -> np.ndarray:
    """Distance from points ``p`` to segments a-b (broadcast over leading axes)."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    ap = p - a
    den = np.sum(ab * ab, axis=-1)
    t = np.where(den > 0, np.sum(ap * ab, axis=-1) / np.where(den > 0, den, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.hypot(p[..., 0] - proj[..., 0], p[..., 1] - proj[..., 1])


def _segment_region_distance(p: np.ndarray, row: np.ndarray) -> np.ndarray:
    cx, cy, R, px, py, qx, qy, side = row
    rel = p - (cx, cy)
    rho = np.hypot(rel[:, 0], rel[:, 1])
    chord = np.array([qx - px, qy - py])

    def halfplane(pts):
        return side * (chord[0] * (pts[..., 1] - py) - chord[1] * (pts[..., 0] - px))

    inside = (rho <= R) & (halfplane(p) >= 0.0)
    d_chord = point_segment_distance(p, (px, py), (qx, qy))
    safe_rho = np.where(rho > 0, rho, 1.0)
    nearest = np.stack([cx + R * rel[:, 0] / safe_rho, cy + R * rel[:, 1] / safe_rho], axis=-1)
    on_arc = (rho > 0) & (halfplane(nearest) >= 0.0)
    d_arc = np.where(on_arc, np.abs(rho - R), np.inf)
    return np.where(inside, 0.0, np.minimum(d_chord, d_arc))


def reflect_across_chord(c_c: Configuration, c_g: Configuration, c_m: Configuration) -> Point:
    """Mirror the position of ``c_m`` across the line through c_c and c_g."""
    ax, ay = c_c.x, c_c.y
    dx, dy = c_g.x - ax, c_g.y - ay
    L2 = dx * dx + dy * dy
    if L2 <= 1e-18:
        raise DegenerateChord("chord endpoints coincide")
    mx, my = c_m.x - ax, c_m.y - ay
    t = (mx * dx + my * dy) / L2
    fx, fy = t * dx, t * dy
    return (ax + 2.0 * fx - mx, ay + 2.0 * fy - my)


def circle_through_three_points(a: Point, b: Point, c: Point) -> Optional[Tuple[Point, float]]:
    """Circumscribed circle as ``(center, radius)``; ``None`` when collinear."""
    ax, ay = a
    bx, by = b
    cx, cy = c
    cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if 0.5 * abs(cross) < COLLINEAR_AREA:
        return None
    d = 2.0 * cross
    bxr, byr, cxr, cyr = bx - ax, by - ay, cx - ax, cy - ay
    b2r = bxr * bxr + byr * byr
    c2r = cxr * cxr + cyr * cyr
    ux = ax + (cyr * b2r - byr * c2r) / d
    uy = ay + (bxr * c2r - cxr * b2r) / d
    return (ux, uy), math.hypot(ax - ux, ay - uy)


def _positions(trajectory) -> np.ndarray:
    if isinstance(trajectory, np.ndarray):
        return np.asarray(trajectory, dtype=float)[:, :2]
    return np.array([[c.x, c.y] for c in trajectory], dtype=float).reshape(-1, 2)


def swept_corridor(trajectory: Union[Sequence[Configuration], np.ndarray], r: float) -> Region:
    """Area swept by a disc of radius ``r`` along the trajectory polyline.

    ``trajectory`` is a sequence of configurations or an (N, >=2) array of
    positions. Repeated positions are collapsed; a trajectory that never
    moves gives a single disc.
    """
    if not r > 0:
        raise ValueError("corridor radius must be positive")
    pts = _positions(trajectory)
    if len(pts) == 0:
        raise EmptyTrajectory("trajectory has no configurations")
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    if len(pts) == 1:
        return Region((Disc((pts[0, 0], pts[0, 1]), r),))
    return Region(tuple(Stadium((a[0], a[1]), (b[0], b[1]), r) for a, b in zip(pts[:-1], pts[1:])))


@dataclass(frozen=True)
class Ray:
    origin: Point
    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError("ray angle must be finite")


def _disc_intervals(ox, oy, dx, dy, cx, cy, R):
    """Entry/exit parameters of unit rays against discs; NaN when missed.

    All arguments broadcast; ray directions must be unit length.
    """
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - R * R
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(b * b - c)
    return -b - sq, -b + sq


def _disc_intervals_packed(ox, oy, D, discs):
    """Same as ``_disc_intervals`` for unit directions D (B, 2) and disc rows."""
    fx = ox - discs[:, 0]
    fy = oy - discs[:, 1]
    b = D @ np.vstack([fx, fy])
    c = fx * fx + fy * fy - discs[:, 2] ** 2
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(b * b - c)
    return -b - sq, -b + sq


def _rect_intervals(ox, oy, D, rc):
    """Intervals against the rectangular cores of stadiums.

    ``rc`` rows are (ax, ay, ux, uy, length, radius) with (ux, uy) the unit
    axis. Parallel rays rely on IEEE infinities in the slab test.
    """
    ax, ay, ux, uy, L, R = (np.ascontiguousarray(rc[:, k]) for k in range(6))
    ou = (ox - ax) * ux + (oy - ay) * uy
    on = (oy - ay) * ux - (ox - ax) * uy
    du = D @ np.vstack([ux, uy])
    dn = D @ np.vstack([-uy, ux])
    with np.errstate(divide="ignore", invalid="ignore"):
        iu = 1.0 / du
        inn = 1.0 / dn
        ta = -ou * iu
        tb = (L - ou) * iu
        na = (-R - on) * inn
        nb = (R - on) * inn
        r0 = np.fmax(np.fmin(ta, tb), np.fmin(na, nb))
        r1 = np.fmin(np.fmax(ta, tb), np.fmax(na, nb))
        miss = ~(r0 <= r1)
    r0[miss] = np.nan
    r1[miss] = np.nan
    return r0, r1


def _segment_intervals(ox, oy, dx, dy, sg):
    cx, cy, R, px, py, qx, qy, side = (sg[:, k][None, :] for k in range(8))
    t0, t1 = _disc_intervals(ox, oy, dx, dy, cx, cy, R)
    # half-plane side * cross(q - p, x - p) >= 0 along the ray
    h0 = side * ((qx - px) * (oy - py) - (qy - py) * (ox - px))
    h1 = side * ((qx - px) * dy - (qy - py) * dx)
    with np.errstate(divide="ignore", invalid="ignore"):
        par = np.abs(h1) < _EPS
        tc = -h0 / np.where(par, 1.0, h1)
        lo = np.where(par, np.where(h0 >= 0, -np.inf, np.nan), np.where(h1 > 0, tc, -np.inf))
        hi = np.where(par, np.where(h0 >= 0, np.inf, np.nan), np.where(h1 > 0, np.inf, tc))
        a = np.maximum(t0, lo)
        b = np.minimum(t1, hi)
        hit = a <= b
    return np.where(hit, a, np.nan), np.where(hit, b, np.nan)


def ray_intervals(origin: Point, angles, region: Region) -> Tuple[np.ndarray, np.ndarray]:
    """[entry, exit] ray parameters per convex part, shape (B, P); NaN = miss."""
    ang = np.atleast_1d(np.asarray(angles, dtype=float))
    D = np.column_stack([np.cos(ang), np.sin(ang)])
    dx = D[:, :1]
    dy = D[:, 1:]
    ox, oy = float(origin[0]), float(origin[1])
    parts0, parts1 = [], []
    if len(region._discs):
        t0, t1 = _disc_intervals_packed(ox, oy, D, region._discs)
        parts0.append(t0)
        parts1.append(t1)
    if len(region._stadiums):
        discs, rects = region._stadium_parts
        t0, t1 = _disc_intervals_packed(ox, oy, D, discs)
        parts0.append(t0)
        parts1.append(t1)
        if len(rects):
            t0, t1 = _rect_intervals(ox, oy, D, rects)
            parts0.append(t0)
            parts1.append(t1)
    if len(region._segments):
        t0, t1 = _segment_intervals(ox, oy, dx, dy, region._segments)
        parts0.append(t0)
        parts1.append(t1)
    if not parts0:
        empty = np.empty((len(ang), 0))
        return empty, empty
    return np.concatenate(parts0, axis=1), np.concatenate(parts1, axis=1)


def ray_region_distances_batch(origin: Point, angles, region: Region, max_range: float
                               ) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized first-hit / last-exit distances for many rays from one origin.

    Intervals are clipped to [0, max_range]. The first hit is the start of
    the earliest clipped interval (0 when the origin is inside) and the last
    exit the end of the latest one (``max_range`` when the region extends
    beyond it). Misses are NaN.
    """
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    t0, t1 = ray_intervals(origin, angles, region)
    n = t0.shape[0]
    if t0.shape[1] == 0:
        nan = np.full(n, np.nan)
        return nan, nan.copy()
    with np.errstate(invalid="ignore"):
        valid = (t1 >= 0.0) & (t0 <= max_range)
    lo = np.where(valid, np.clip(t0, 0.0, max_range), np.inf)
    hi = np.where(valid, np.clip(t1, 0.0, max_range), -np.inf)
    first = lo.min(axis=1)
    last = hi.max(axis=1)
    any_hit = valid.any(axis=1)
    return np.where(any_hit, first, np.nan), np.where(any_hit, last, np.nan)


def ray_region_distances(ray: Ray, region: Region, max_range: float
                         ) -> Tuple[Optional[float], Optional[float]]:
    """``(first_hit, last_exit)`` of a single ray, ``None`` for a miss."""
    f, l = ray_region_distances_batch(ray.origin, [ray.angle], region, max_range)
    first = None if np.isnan(f[0]) else float(f[0])
    last = None if np.isnan(l[0]) else float(l[0])
    return first, last


def first_hit_beyond(origin: Point, angles, region: Region, start, max_range: float) -> np.ndarray:
    """Smallest t >= start[i] with ray i inside the region, clipped at max_range.

    Rays whose region intervals all end before ``start`` (or begin after
    ``max_range``) give NaN.
    """
    t0, t1 = ray_intervals(origin, angles, region)
    start = np.broadcast_to(np.asarray(start, dtype=float), (t0.shape[0],))
    if t0.shape[1] == 0:
        return np.full(t0.shape[0], np.nan)
    s = start[:, None]
    with np.errstate(invalid="ignore"):
        valid = (t1 >= s) & (t0 <= max_range) & (t1 >= 0.0)
    lo = np.where(valid, np.maximum(np.maximum(t0, s), 0.0), np.inf)
    out = lo.min(axis=1)
    return np.where(np.isfinite(out), np.minimum(out, max_range), np.nan)
