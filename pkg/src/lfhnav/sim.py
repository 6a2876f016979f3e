"""Differential-drive kinematics, worlds, collision checks and a ray-cast LiDAR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from lfhnav.geometry import (
    Configuration,
    Region,
    ray_region_distances_batch,
)

DT = 0.04
RATE_HZ = 25
FOOTPRINT_R = 0.25
V_MAX = 1.0
OMEGA_MAX = 1.57
V_BACKUP = -0.2


@dataclass(frozen=True)
class Limits:
    a_v: float = 2.0
    a_omega: float = 3.14
    v_min: float = V_BACKUP
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX


@dataclass(frozen=True)
class Command:
    v: float
    omega: float

    def mirrored(self) -> "Command":
        return Command(self.v, -self.omega)


@dataclass(frozen=True)
class RobotState:
    pose: Configuration
    v: float = 0.0
    omega: float = 0.0
    t: float = 0.0


def arc_advance(x, y, psi, v, omega, dt):
    """Exact pose after moving at constant (v, omega) for ``dt``.

    Works elementwise on arrays as well as on scalars.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    dpsi = omega * dt
    psi1 = psi + dpsi
    turning = np.abs(omega) > 1e-9
    w = np.where(turning, omega, 1.0)
    xa = x + v / w * (np.sin(psi1) - np.sin(psi))
    ya = y - v / w * (np.cos(psi1) - np.cos(psi))
    xs = x + v * dt * np.cos(psi)
    ys = y + v * dt * np.sin(psi)
    return np.where(turning, xa, xs), np.where(turning, ya, ys), psi1


def step_velocity(v, omega, v_cmd, omega_cmd, dt, limits: Limits):
    """Acceleration- and bound-limited velocity update (array friendly)."""
    dv = np.clip(np.asarray(v_cmd, dtype=float) - v, -limits.a_v * dt, limits.a_v * dt)
    dw = np.clip(np.asarray(omega_cmd, dtype=float) - omega, -limits.a_omega * dt, limits.a_omega * dt)
    v1 = np.clip(v + dv, limits.v_min, limits.v_max)
    w1 = np.clip(omega + dw, -limits.omega_max, limits.omega_max)
    return v1, w1


def integrate_unicycle(state: RobotState, cmd: Command, dt: float = DT,
                       limits: Limits = Limits()) -> RobotState:
    """Advance one step: clamp velocities toward ``cmd``, then follow the exact arc."""
    if not 0 < dt <= 0.1:
        raise ValueError("dt must lie in (0, 0.1]")
    v1, w1 = step_velocity(state.v, state.omega, cmd.v, cmd.omega, dt, limits)
    p = state.pose
    x, y, psi = arc_advance(p.x, p.y, p.psi, v1, w1, dt)
    return RobotState(Configuration(float(x), float(y), float(psi)), float(v1), float(w1), state.t + dt)


@dataclass(frozen=True)
class SensorConfig:
    beam_count: int = 720
    fov: float = math.radians(270.0)
    max_range: float = 1.0
    min_range: float = 0.0

    def __post_init__(self):
        if self.beam_count < 2:
            raise ValueError("beam_count must be at least 2")
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("fov must lie in (0, 2*pi]")
        if not self.max_range > self.min_range >= 0:
            raise ValueError("need 0 <= min_range < max_range")

    @property
    def relative_angles(self) -> np.ndarray:
        # offsets from the center index are exact half-integers, so the
        # layout is bitwise antisymmetric about the heading
        n = self.beam_count
        return (np.arange(n) - (n - 1) / 2) * (self.fov / (n - 1))

    def beam_angles(self, psi: float) -> np.ndarray:
        return psi + self.relative_angles


@dataclass(frozen=True)
class Scan:
    ranges: np.ndarray
    config: SensorConfig = field(default_factory=SensorConfig)

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        if r.shape != (self.config.beam_count,):
            raise ValueError(f"expected {self.config.beam_count} ranges, got shape {r.shape}")
        object.__setattr__(self, "ranges", r)

    def endpoints(self, pose: Optional[Configuration] = None) -> np.ndarray:
        """Beam endpoints of readings shorter than max range.

        Expressed in the robot frame, or the world frame when ``pose`` is given.
        """
        mask = self.ranges < self.config.max_range
        ang = self.config.relative_angles[mask]
        rr = self.ranges[mask]
        if pose is not None:
            ang = ang + pose.psi
            return np.stack([pose.x + rr * np.cos(ang), pose.y + rr * np.sin(ang)], axis=-1)
        return np.stack([rr * np.cos(ang), rr * np.sin(ang)], axis=-1)


@dataclass(frozen=True)
class World:
    """Axis-aligned bounded world. ``bounds`` is (xmin, ymin, xmax, ymax);
    ``None`` means unbounded open space."""

    bounds: Optional[Tuple[float, float, float, float]]
    obstacles: Region
    start: Configuration
    goal: Configuration

    def mirrored(self) -> "World":
        b = self.bounds
        mb = None if b is None else (b[0], -b[3], b[2], -b[1])
        return World(mb, self.obstacles.mirrored(), self.start.mirrored(), self.goal.mirrored())


def _wall_distances(bounds, x, y, angles) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    dx, dy = np.cos(angles), np.sin(angles)
    with np.errstate(divide="ignore"):
        tx = np.where(dx > 0, (xmax - x) / dx, np.where(dx < 0, (xmin - x) / dx, np.inf))
        ty = np.where(dy > 0, (ymax - y) / dy, np.where(dy < 0, (ymin - y) / dy, np.inf))
    return np.maximum(np.minimum(tx, ty), 0.0)


def lidar_scan(world: World, pose: Configuration, cfg: SensorConfig = SensorConfig()) -> Scan:
    angles = cfg.beam_angles(pose.psi)
    ranges = np.full(cfg.beam_count, cfg.max_range)
    if not world.obstacles.is_empty:
        first, _ = ray_region_distances_batch(pose.xy, angles, world.obstacles, cfg.max_range)
        ranges = np.fmin(ranges, first)
    if world.bounds is not None:
        ranges = np.minimum(ranges, _wall_distances(world.bounds, pose.x, pose.y, angles))
    return Scan(np.clip(ranges, cfg.min_range, cfg.max_range), cfg)


def clearance_points(world: World, points) -> np.ndarray:
    """Distance from each (N, 2) point to the nearest obstacle or wall."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d = world.obstacles.distance(pts) if not world.obstacles.is_empty else np.full(len(pts), np.inf)
    if world.bounds is not None:
        xmin, ymin, xmax, ymax = world.bounds
        walls = np.minimum(np.minimum(pts[:, 0] - xmin, xmax - pts[:, 0]),
                           np.minimum(pts[:, 1] - ymin, ymax - pts[:, 1]))
        d = np.minimum(d, walls)
    return d


def clearance(world: World, pose: Configuration) -> float:
    """Distance from the robot center to the nearest obstacle or wall."""
    return float(clearance_points(world, [pose.xy])[0])


def in_collision(world: World, pose: Configuration, r: float = FOOTPRINT_R) -> bool:
    """True iff the footprint disc overlaps an obstacle interior or leaves the bounds.

    Exact tangency is not a collision.
    """
    if not r > 0:
        raise ValueError("footprint radius must be positive")
    return clearance(world, pose) < r - 1e-9


__all__ = [
    "DT", "RATE_HZ", "FOOTPRINT_R", "V_MAX", "OMEGA_MAX", "V_BACKUP",
    "Limits", "Command", "RobotState", "SensorConfig", "Scan", "World",
    "arc_advance", "step_velocity", "integrate_unicycle", "lidar_scan",
    "clearance", "clearance_points", "in_collision",
]
