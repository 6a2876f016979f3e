"""
Hallucinated perception for plans recorded in open space.

Two constructions are provided. The most constrained one treats everything
outside the swept corridor of a plan window as obstacle and ray-casts the
corridor boundary. The minimal one blocks the straight shortcut with the
circular segment mirrored from the plan's midpoint, then samples many
plausible scans between the corridor boundary (pushed out by a
speed-dependent offset) and that segment.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from lfhnav.datagen import records_to_array
from lfhnav.geometry import (
    CircularSegment,
    Configuration,
    DegenerateChord,
    Region,
    circle_through_three_points,
    first_hit_beyond,
    ray_region_distances_batch,
    reflect_across_chord,
    swept_corridor,
    wrap_angle,
)
from lfhnav.sim import FOOTPRINT_R, Command, Scan, SensorConfig

STRAIGHT_TOL = 1e-3
SAMPLES_PER_WINDOW = 12

KIND_MINIMAL = 0
KIND_EMPTY = 1
KIND_CONSTRAINED = 2


class BoundsViolation(ValueError):
    """A lower beam bound exceeds its upper bound."""


@dataclass(frozen=True)
class HallucinationParams:
    sampling_count: int = 10
    alpha: float = 0.48
    offset_lo_v: float = 0.3
    offset_hi_v: float = 1.0
    offset_max: float = 1.0
    v_empty_threshold: float = 0.8
    v_constrained_threshold: float = 0.3
    footprint_r: float = FOOTPRINT_R
    lookahead: float = 1.0

    def __post_init__(self):
        if not (0 <= self.v_constrained_threshold <= self.offset_lo_v
                <= self.v_empty_threshold <= self.offset_hi_v):
            raise ValueError("speed thresholds out of order")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.sampling_count < 1 or self.sampling_count > SAMPLES_PER_WINDOW:
            raise ValueError(f"sampling_count must lie in [1, {SAMPLES_PER_WINDOW}]")
        if not (self.footprint_r > 0 and self.lookahead > 0):
            raise ValueError("footprint and lookahead must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PlanWindow:
    """A stretch of recorded motion from ``c_c`` to the local goal ``c_g``.

    ``trajectory`` is an (K, 3) array of x, y, psi that starts at c_c and
    ends at c_g. ``vel_prev`` is the velocity one control period before
    c_c (equal to the label for the first record of a log).
    """

    index: int
    c_c: Configuration
    c_m: Configuration
    c_g: Configuration
    trajectory: np.ndarray
    label: Command
    v_current: float
    vel_prev: Tuple[float, float]

    def mirrored(self) -> "PlanWindow":
        traj = self.trajectory * np.array([1.0, -1.0, -1.0])
        return PlanWindow(self.index, self.c_c.mirrored(), self.c_m.mirrored(), self.c_g.mirrored(),
                          traj, self.label.mirrored(), self.v_current,
                          (self.vel_prev[0], -self.vel_prev[1]))

    @property
    def goal_rel(self) -> Tuple[float, float]:
        return self.c_c.to_local(self.c_g.x, self.c_g.y)


@dataclass(frozen=True)
class TrainSample:
    scan: Scan
    goal_rel: Tuple[float, float]
    vel_in: Tuple[float, float]
    label: Command


def _interp_config(pos, psi, cum, j, target) -> Configuration:
    seg = cum[j] - cum[j - 1]
    f = 0.0 if seg <= 0 else min(1.0, max(0.0, (target - cum[j - 1]) / seg))
    xy = pos[j - 1] + f * (pos[j] - pos[j - 1])
    dpsi = wrap_angle(psi[j] - psi[j - 1])
    return Configuration(xy[0], xy[1], psi[j - 1] + f * dpsi)


def extract_windows(d_raw, params: HallucinationParams = HallucinationParams()) -> List[PlanWindow]:
    """Cut the log into windows that each cover ``lookahead`` of arc length.

    Windows whose remaining path is shorter than the lookahead are dropped,
    which also drops windows that never move.
    """
    arr = records_to_array(d_raw)
    n = len(arr)
    if n == 0:
        return []
    pos = arr[:, 1:3]
    psi = arr[:, 3]
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pos, axis=0).T))])
    L = params.lookahead
    tol = 1e-9
    out = []
    for i in range(n):
        j = int(np.searchsorted(cum, cum[i] + L - tol, side="left"))
        if j >= n:
            break
        jm = int(np.searchsorted(cum, cum[i] + L / 2 - tol, side="left"))
        jm = max(jm, i + 1)
        c_g = _interp_config(pos, psi, cum, j, cum[i] + L)
        c_m = _interp_config(pos, psi, cum, jm, cum[i] + L / 2)
        traj = np.vstack([arr[i:j, 1:4], [[c_g.x, c_g.y, c_g.psi]]])
        label = Command(float(arr[i, 4]), float(arr[i, 5]))
        prev = arr[i - 1] if i > 0 else arr[i]
        out.append(PlanWindow(i, Configuration(*arr[i, 1:4]), c_m, c_g, traj, label,
                              float(arr[i, 4]), (float(prev[4]), float(prev[5]))))
    return out


def offset_fn(v: float, params: HallucinationParams = HallucinationParams()) -> float:
    """Extra clearance added to the lower beam bound at speed ``v``."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    lo, hi = params.offset_lo_v, params.offset_hi_v
    if v <= lo:
        return 0.0
    if v >= hi:
        return params.offset_max
    return (v - lo) / (hi - lo) * params.offset_max


def corridor_exits(window: PlanWindow, cfg: SensorConfig, params: HallucinationParams,
                   pose: Optional[Configuration] = None) -> np.ndarray:
    """Per-beam last exit from the window's swept corridor, clipped at max range."""
    pose = window.c_c if pose is None else pose
    corridor = swept_corridor(window.trajectory, params.footprint_r)
    _, last = ray_region_distances_batch(pose.xy, cfg.beam_angles(pose.psi), corridor, cfg.max_range)
    return np.nan_to_num(last, nan=0.0)


def most_constrained_scan(window: PlanWindow, cfg: SensorConfig = SensorConfig(),
                          params: HallucinationParams = HallucinationParams()) -> Scan:
    """Project the complement of the swept corridor onto the sensor at c_c."""
    return Scan(corridor_exits(window, cfg, params), cfg)


def build_minimal_region(window: PlanWindow) -> Region:
    """Circular segment between the chord c_c-c_g and the arc through the mirrored midpoint.

    Straight plans (midpoint within 1 mm of the chord) need no obstacle and
    yield the empty region.
    """
    c_c, c_m, c_g = window.c_c, window.c_m, window.c_g
    if math.hypot(c_g.x - c_c.x, c_g.y - c_c.y) < 1e-9:
        raise DegenerateChord("window start and goal coincide")
    mx, my = reflect_across_chord(c_c, c_g, c_m)
    dx, dy = c_g.x - c_c.x, c_g.y - c_c.y
    cross = dx * (my - c_c.y) - dy * (mx - c_c.x)
    if abs(cross) / math.hypot(dx, dy) < STRAIGHT_TOL:
        return Region()
    circ = circle_through_three_points(c_c.xy, (mx, my), c_g.xy)
    if circ is None:
        return Region()
    center, radius = circ
    # snap the chord ends onto the computed circle against rounding
    ends = []
    for px, py in (c_c.xy, c_g.xy):
        d = math.hypot(px - center[0], py - center[1])
        ends.append((center[0] + (px - center[0]) * radius / d, center[1] + (py - center[1]) * radius / d))
    return Region((CircularSegment(center, radius, ends[0], ends[1], 1 if cross > 0 else -1),))


def beam_bounds(window: PlanWindow, region: Region, cfg: SensorConfig = SensorConfig(),
                params: HallucinationParams = HallucinationParams(),
                pose: Optional[Configuration] = None,
                raw_min: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-beam ``(min, max)`` ranges for sampled hallucinations.

    The upper bound is where the beam first meets the minimal region
    outside the swept corridor, or the sensor limit. The lower bound is the
    corridor boundary pushed out by the speed offset, never above the upper.
    """
    pose = window.c_c if pose is None else pose
    if raw_min is None:
        raw_min = corridor_exits(window, cfg, params, pose)
    hi = np.full(cfg.beam_count, cfg.max_range)
    if not region.is_empty:
        hit = first_hit_beyond(pose.xy, cfg.beam_angles(pose.psi), region, raw_min, cfg.max_range)
        hi = np.fmin(hi, hit)
    lo = np.minimum(raw_min + offset_fn(window.v_current, params), hi)
    return lo, hi


def smooth_clamp(u: np.ndarray, lo: np.ndarray, hi: np.ndarray, alpha: float) -> np.ndarray:
    """Turn unit uniforms into a beam-continuous scan within [lo, hi].

    Beams run along the last axis; leading axes are independent scans.
    """
    u = np.asarray(u, dtype=float)
    lo = np.broadcast_to(lo, u.shape)
    hi = np.broadcast_to(hi, u.shape)
    if np.any(lo > hi):
        raise BoundsViolation("lower beam bound above upper bound")
    draw = lo + u * (hi - lo)
    out = np.empty_like(draw)
    out[..., 0] = draw[..., 0]
    for i in range(1, u.shape[-1]):
        s = alpha * out[..., i - 1] + (1.0 - alpha) * draw[..., i]
        out[..., i] = np.minimum(np.maximum(s, lo[..., i]), hi[..., i])
    return out


def sample_scan(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray, alpha: float,
                cfg: Optional[SensorConfig] = None) -> Scan:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise BoundsViolation("lower beam bound above upper bound")
    cfg = cfg or SensorConfig(beam_count=len(lo))
    return Scan(smooth_clamp(rng.random(lo.shape), lo, hi, alpha), cfg)


@dataclass
class TrainSet:
    """Column-oriented training data.

    ``kind`` marks each scan as minimal (0), empty-world (1) or most
    constrained (2); ``window`` is the source record index.
    """

    scans: np.ndarray
    goals: np.ndarray
    vels: np.ndarray
    labels: np.ndarray
    kind: np.ndarray
    window: np.ndarray

    def __len__(self):
        return len(self.labels)

    def samples(self, cfg: SensorConfig = SensorConfig()) -> Iterator[TrainSample]:
        for i in range(len(self)):
            yield TrainSample(Scan(self.scans[i].astype(float), cfg), tuple(self.goals[i]),
                              tuple(self.vels[i]), Command(*self.labels[i]))

    @classmethod
    def concat(cls, parts: Sequence["TrainSet"]) -> "TrainSet":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("scans", "goals", "vels", "labels", "kind", "window")))


def window_kinds(v_current: float, params: HallucinationParams) -> List[int]:
    """Scan kinds emitted for one window, always SAMPLES_PER_WINDOW long."""
    kinds = [KIND_MINIMAL] * params.sampling_count
    if v_current > params.v_empty_threshold:
        kinds.append(KIND_EMPTY)
    elif v_current < params.v_constrained_threshold:
        kinds.append(KIND_CONSTRAINED)
    kinds += [KIND_MINIMAL] * (SAMPLES_PER_WINDOW - len(kinds))
    return kinds


def _window_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _synthesize_chunk(windows, cfg, params, seed, mode):
    rows_lo, rows_hi, rows_u, fixed, meta = [], [], [], [], []
    for w in windows:
        exits = corridor_exits(w, cfg, params)
        goal = w.goal_rel
        if mode == "most-constrained":
            kinds = [KIND_CONSTRAINED]
        else:
            kinds = window_kinds(w.v_current, params)
            region = build_minimal_region(w)
            lo, hi = beam_bounds(w, region, cfg, params, raw_min=exits)
            n_min = kinds.count(KIND_MINIMAL)
            rows_u.append(_window_rng(seed, w.index).random((n_min, cfg.beam_count)))
            rows_lo.append(np.broadcast_to(lo, (n_min, cfg.beam_count)))
            rows_hi.append(np.broadcast_to(hi, (n_min, cfg.beam_count)))
        for k in kinds:
            if k == KIND_EMPTY:
                fixed.append(np.full(cfg.beam_count, cfg.max_range))
            elif k == KIND_CONSTRAINED:
                fixed.append(exits)
            else:
                fixed.append(None)
            meta.append((goal, w.vel_prev, (w.label.v, w.label.omega), k, w.index))
    sampled = iter(())
    if rows_u:
        sampled = iter(smooth_clamp(np.vstack(rows_u), np.vstack(rows_lo), np.vstack(rows_hi), params.alpha))
    scans = np.empty((len(meta), cfg.beam_count), dtype=np.float32)
    for r, f in enumerate(fixed):
        scans[r] = next(sampled) if f is None else f
    goals, vels, labels, kinds, idx = zip(*meta) if meta else ((), (), (), (), ())
    return TrainSet(scans, np.array(goals, dtype=float).reshape(-1, 2), np.array(vels, dtype=float).reshape(-1, 2),
                    np.array(labels, dtype=float).reshape(-1, 2), np.array(kinds, dtype=np.int8),
                    np.array(idx, dtype=np.int32))


def synthesize_windows(windows: Sequence[PlanWindow], cfg: SensorConfig = SensorConfig(),
                       params: HallucinationParams = HallucinationParams(), seed: int = 0,
                       mode: str = "minimal", chunk: int = 256) -> TrainSet:
    """Hallucinate training samples for the given windows.

    In ``minimal`` mode every window yields exactly twelve samples; in
    ``most-constrained`` mode it yields its single deterministic scan.
    Randomness is drawn per window from (seed, window index), so any
    partition of the windows reproduces the same samples.
    """
    if mode not in ("minimal", "most-constrained"):
        raise ValueError(f"unknown hallucination mode {mode!r}")
    parts = [_synthesize_chunk(windows[s:s + chunk], cfg, params, seed, mode)
             for s in range(0, len(windows), chunk)]
    if not parts:
        return _synthesize_chunk([], cfg, params, seed, mode)
    return TrainSet.concat(parts)


def synthesize_dataset(d_raw, cfg: SensorConfig = SensorConfig(),
                       params: HallucinationParams = HallucinationParams(), seed: int = 0,
                       mode: str = "minimal") -> TrainSet:
    if len(d_raw) == 0:
        raise ValueError("raw dataset is empty")
    return synthesize_windows(extract_windows(d_raw, params), cfg, params, seed, mode)
