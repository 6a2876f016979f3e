"""Deployment-time navigation: global planning, local goals, safety gating,
recovery, the DWA baseline and the episode loop."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from lfhnav.geometry import Configuration, wrap_angle
from lfhnav.halluc import HallucinationParams, PlanWindow, most_constrained_scan
from lfhnav.learn import ModelWeights, predict_action
from lfhnav.sim import (
    DT,
    FOOTPRINT_R,
    V_BACKUP,
    Command,
    Limits,
    RobotState,
    Scan,
    SensorConfig,
    World,
    arc_advance,
    clearance_points,
    in_collision,
    integrate_unicycle,
    lidar_scan,
    step_velocity,
)

ALIGN = "align"
BACKUP = "backup"
PLANNERS = ("hlsd", "lfh", "dwa")


class NoPath(RuntimeError):
    pass


# ---------------------------------------------------------------- global path


@dataclass(frozen=True)
class GlobalPath:
    waypoints: np.ndarray
    resolution: float

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if len(w) == 0:
            raise ValueError("path must contain at least one waypoint")
        object.__setattr__(self, "waypoints", w)

    @property
    def cumulative(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.waypoints, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cumulative[-1])


def _planning_bounds(world: World, start, margin: float = 2.0):
    if world.bounds is not None:
        return world.bounds
    pts = np.array([start, world.goal.xy])
    lo, hi = pts.min(axis=0) - margin, pts.max(axis=0) + margin
    return (lo[0], lo[1], hi[0], hi[1])


def _segment_free(world: World, a, b, r: float, step: float) -> bool:
    n = max(2, int(math.ceil(math.hypot(b[0] - a[0], b[1] - a[1]) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = np.asarray(a) * (1 - t) + np.asarray(b) * t
    return bool(np.all(clearance_points(world, pts) >= r))


def _densify(points: np.ndarray, spacing: float) -> np.ndarray:
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.array(out)


def plan_global(world: World, resolution: float = 0.05, footprint_r: float = FOOTPRINT_R,
                start: Optional[Tuple[float, float]] = None, snap_start: bool = False) -> GlobalPath:
    """Grid A* from start to goal with shortcut smoothing.

    Cells are blocked when their center is closer than the footprint radius
    plus half a cell diagonal to an obstacle or wall; the extra margin
    guarantees the straight moves between free neighbours stay collision
    free. With ``snap_start`` an occupied start is moved to the nearest
    free cell instead of failing, which is what mid-episode replanning needs.
    """
    start = world.start.xy if start is None else tuple(start)
    goal = world.goal.xy
    xmin, ymin, xmax, ymax = _planning_bounds(world, start)
    nx = int(math.floor((xmax - xmin) / resolution))
    ny = int(math.floor((ymax - ymin) / resolution))
    if nx < 1 or ny < 1:
        raise NoPath("planning area is empty")
    cx = xmin + (np.arange(nx) + 0.5) * resolution
    cy = ymin + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    inflate = footprint_r + resolution * math.sqrt(2) / 2
    free = (clearance_points(world, np.column_stack([gx.ravel(), gy.ravel()])) >= inflate).reshape(nx, ny)

    def cell_of(p):
        i = int(np.clip(math.floor((p[0] - xmin) / resolution), 0, nx - 1))
        j = int(np.clip(math.floor((p[1] - ymin) / resolution), 0, ny - 1))
        return i, j

    s_cell, g_cell = cell_of(start), cell_of(goal)
    if not free[g_cell]:
        raise NoPath("goal is not free on the planning grid")
    if not free[s_cell]:
        if not snap_start:
            raise NoPath("start is not free on the planning grid")
        fi, fj = np.nonzero(free)
        if len(fi) == 0:
            raise NoPath("no free cell")
        k = int(np.argmin((cx[fi] - start[0]) ** 2 + (cy[fj] - start[1]) ** 2))
        s_cell = (int(fi[k]), int(fj[k]))

    cells = _astar(free, s_cell, g_cell)
    pts = np.array([[cx[i], cy[j]] for i, j in cells])
    snapped = not free[cell_of(start)]
    if not snapped:
        pts[0] = start
    pts[-1] = goal
    if len(pts) == 1:
        pts = np.array([start, goal], dtype=float)
    smooth = _shortcut(world, pts, inflate, resolution / 4)
    if snapped:
        smooth = np.vstack([start, smooth])
    return GlobalPath(_densify(smooth, resolution), resolution)


def _astar(free: np.ndarray, s, g) -> List[Tuple[int, int]]:
    nx, ny = free.shape
    sq2 = math.sqrt(2.0)

    def h(c):
        dx, dy = abs(c[0] - g[0]), abs(c[1] - g[1])
        return (dx + dy) + (sq2 - 2) * min(dx, dy)

    moves = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, sq2), (1, -1, sq2), (-1, 1, sq2), (-1, -1, sq2)]
    best = {s: 0.0}
    parent = {s: None}
    heap = [(h(s), 0.0, 0, s)]
    counter = 0
    closed = set()
    while heap:
        _, gc, _, c = heapq.heappop(heap)
        if c in closed:
            continue
        if c == g:
            out = []
            while c is not None:
                out.append(c)
                c = parent[c]
            return out[::-1]
        closed.add(c)
        for di, dj, cost in moves:
            n = (c[0] + di, c[1] + dj)
            if not (0 <= n[0] < nx and 0 <= n[1] < ny) or not free[n]:
                continue
            # no corner cutting on diagonal moves
            if di and dj and not (free[c[0] + di, c[1]] and free[c[0], c[1] + dj]):
                continue
            ng = gc + cost
            if ng < best.get(n, math.inf) - 1e-12:
                best[n] = ng
                parent[n] = c
                counter += 1
                heapq.heappush(heap, (ng + h(n), ng, counter, n))
    raise NoPath("goal unreachable from start")


def _shortcut(world: World, pts: np.ndarray, r: float, step: float) -> np.ndarray:
    """Greedy shortcutting: from each kept vertex jump to the farthest visible one."""
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not _segment_free(world, pts[i], pts[j], r, step):
            j -= 1
        out.append(pts[j])
        i = j
    return np.array(out)


def _project(path: GlobalPath, point) -> Tuple[int, float, np.ndarray]:
    """Nearest point on the path as (segment index, fraction, point)."""
    w = path.waypoints
    p = np.asarray(point, dtype=float)
    if len(w) == 1:
        return 0, 0.0, w[0].copy()
    a, b = w[:-1], w[1:]
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    t = np.where(den > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(den > 0, den, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[:, None] * ab
    d = np.einsum("ij,ij->i", q - p, q - p)
    k = int(np.argmin(d))
    return k, float(t[k]), q[k]


def _walk(path: GlobalPath, k: int, t: float, distance: float) -> Tuple[List[np.ndarray], np.ndarray]:
    """Points from the projection (k, t) forward by ``distance`` along the path."""
    w = path.waypoints
    if len(w) == 1:
        return [w[0]], w[0]
    cur = w[k] + t * (w[k + 1] - w[k])
    pts = [cur]
    left = distance
    i = k
    while i < len(w) - 1:
        nxt = w[i + 1]
        seg = float(np.hypot(*(nxt - cur)))
        if seg >= left:
            end = cur + (nxt - cur) * (left / seg) if seg > 0 else cur
            pts.append(end)
            return pts, end
        left -= seg
        cur = nxt
        pts.append(cur)
        i += 1
    return pts, w[-1]


def path_tangent(path: GlobalPath, point) -> float:
    """Heading of the path at the projection of ``point``."""
    w = path.waypoints
    if len(w) == 1:
        return 0.0
    k, _, _ = _project(path, point)
    # skip zero-length segments
    while k < len(w) - 2 and np.allclose(w[k + 1], w[k]):
        k += 1
    d = w[k + 1] - w[k]
    return math.atan2(d[1], d[0])


def local_goal(path: GlobalPath, pose: Configuration, lookahead: float = 1.0) -> Configuration:
    """Point ``lookahead`` metres along the path past the pose's projection.

    Falls back to the final waypoint when less than ``lookahead`` remains.
    The returned heading is the local path direction and carries no meaning
    for the planners.
    """
    k, t, _ = _project(path, pose.xy)
    pts, end = _walk(path, k, t, lookahead)
    heading = pose.psi
    if len(pts) >= 2 and np.hypot(*(pts[-1] - pts[-2])) > 0:
        heading = math.atan2(*(pts[-1] - pts[-2])[::-1])
    return Configuration(float(end[0]), float(end[1]), heading)


# ---------------------------------------------------------------- safety


def _rollout(v0: float, w0: float, cmd: Command, horizon: float, dt: float, limits: Limits,
             substeps: int = 1) -> np.ndarray:
    """Robot-frame poses of the held-command rollout, starting at the origin.

    Velocities change every ``dt``; ``substeps`` subdivides each interval
    along the exact arc.
    """
    n = int(round(horizon / dt))
    x = y = psi = 0.0
    v, w = v0, w0
    out = [(0.0, 0.0)]
    h = dt / substeps
    for _ in range(n):
        v, w = step_velocity(v, w, cmd.v, cmd.omega, dt, limits)
        for _ in range(substeps):
            x, y, psi = (float(c) for c in arc_advance(x, y, psi, v, w, h))
            out.append((x, y))
    return np.array(out)


def _polyline_point_distance(poly: np.ndarray, pts: np.ndarray) -> float:
    if len(pts) == 0:
        return math.inf
    a, b = poly[:-1], poly[1:]
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    ap = pts[:, None, :] - a[None, :, :]
    t = np.einsum("mkj,kj->mk", ap, ab) / np.where(den > 0, den, 1.0)
    t = np.clip(np.where(den > 0, t, 0.0), 0.0, 1.0)
    d = ap - t[..., None] * ab
    return float(np.sqrt(np.min(np.einsum("mkj,mkj->mk", d, d))))


def mpc_safe(scan: Scan, state: RobotState, cmd: Command, horizon: float = 1.0, dt: float = 0.05,
             limits: Limits = Limits(), footprint_r: float = FOOTPRINT_R) -> bool:
    """Roll the held command forward and veto it if the footprint meets a scan point.

    The swept path is checked as the polyline through the rolled poses, so
    motion between samples is covered up to the arc sagitta.
    """
    pts = scan.endpoints()
    if len(pts) == 0:
        return True
    poly = _rollout(state.v, state.omega, cmd, horizon, dt, limits)
    return _polyline_point_distance(poly, pts) >= footprint_r


# ---------------------------------------------------------------- recovery


@dataclass(frozen=True)
class RecoveryParams:
    align_tolerance: float = 0.1
    backup_speed: float = V_BACKUP
    turn_rate: float = 1.57
    forced_backup: float = 0.5
    probe_speed: float = 0.3


def recovery_command(phase: str, pose: Configuration, path: GlobalPath, forward_safe: bool = False,
                     params: RecoveryParams = RecoveryParams()) -> Tuple[Command, str]:
    """One step of the two-phase recovery.

    Align turns in place toward the path tangent at the robot's projection.
    Once aligned, a still-unsafe forward probe hands over to BackUp, which
    reverses straight. Leaving recovery is the caller's decision.
    """
    if phase == BACKUP:
        return Command(params.backup_speed, 0.0), BACKUP
    if phase != ALIGN:
        raise ValueError(f"unknown recovery phase {phase!r}")
    err = wrap_angle(path_tangent(path, pose.xy) - pose.psi)
    if abs(err) < params.align_tolerance:
        if forward_safe:
            return Command(0.0, 0.0), ALIGN
        return Command(params.backup_speed, 0.0), BACKUP
    return Command(0.0, math.copysign(params.turn_rate, err)), ALIGN


# ---------------------------------------------------------------- DWA


@dataclass(frozen=True)
class DWAParams:
    v_samples: int = 12
    omega_samples: int = 40
    v_max: float = 1.0
    v_min: float = 0.0
    window_dt: float = 0.2
    sim_time: float = 1.0
    sim_dt: float = 0.05
    weights: Tuple[float, float, float] = (2.0, 1.0, 1.0)
    clearance_cap: float = 1.0


def dwa_candidates(state: RobotState, params: DWAParams = DWAParams(),
                   limits: Limits = Limits()) -> np.ndarray:
    """(v_samples * omega_samples, 2) velocities reachable within the window."""
    dv, dw = limits.a_v * params.window_dt, limits.a_omega * params.window_dt
    vlo, vhi = max(params.v_min, state.v - dv), min(params.v_max, state.v + dv)
    if vlo > vhi:
        vlo = vhi = min(max(state.v, params.v_min), params.v_max)
    wlo, whi = max(-limits.omega_max, state.omega - dw), min(limits.omega_max, state.omega + dw)
    vs = np.linspace(vlo, vhi, params.v_samples)
    ws = np.linspace(wlo, whi, params.omega_samples)
    V, W = np.meshgrid(vs, ws, indexing="ij")
    return np.column_stack([V.ravel(), W.ravel()])


def _normalize(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi - lo <= 1e-12:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def dwa_scores(scan: Scan, state: RobotState, path_local: np.ndarray, goal_rel, params: DWAParams,
               footprint_r: float = FOOTPRINT_R, limits: Limits = Limits()):
    """Candidates, feasibility mask and total score (NaN for infeasible ones)."""
    cand = dwa_candidates(state, params, limits)
    n = int(round(params.sim_time / params.sim_dt))
    ts = np.arange(1, n + 1) * params.sim_dt
    v, w = cand[:, :1], cand[:, 1:]
    x, y, _ = arc_advance(0.0, 0.0, 0.0, v, w, ts[None, :])
    poses = np.stack([x, y], axis=-1)
    pts = scan.endpoints()
    if len(pts):
        d, _ = cKDTree(pts).query(poses.reshape(-1, 2))
        clear = d.reshape(len(cand), n).min(axis=1)
        clear = np.minimum(clear, np.hypot(*pts.T).min())
    else:
        clear = np.full(len(cand), math.inf)
    feasible = clear >= footprint_r
    end = poses[:, -1, :]
    g = np.asarray(goal_rel, dtype=float)
    progress = np.hypot(*g) - np.hypot(*(end - g).T)
    if len(path_local):
        pd, _ = cKDTree(path_local).query(end)
    else:
        pd = np.zeros(len(cand))
    score = np.full(len(cand), np.nan)
    if feasible.any():
        f = feasible
        wg, wp, wo = params.weights
        score[f] = (wg * _normalize(progress[f]) + wp * _normalize(-pd[f])
                    + wo * _normalize(np.minimum(clear[f], params.clearance_cap)))
    return cand, feasible, score


def dwa_select(cand: np.ndarray, score: np.ndarray) -> Optional[int]:
    """Argmax of the score; ties go to smaller |omega|, then smaller index."""
    ok = ~np.isnan(score)
    if not ok.any():
        return None
    idx = np.nonzero(ok)[0]
    best = score[idx].max()
    top = idx[score[idx] == best]
    order = np.lexsort((top, np.abs(cand[top, 1])))
    return int(top[order[0]])


def dwa_command(scan: Scan, state: RobotState, path: GlobalPath, goal_rel=None,
                params: DWAParams = DWAParams(), footprint_r: float = FOOTPRINT_R,
                limits: Limits = Limits()) -> Optional[Command]:
    """Classical dynamic-window choice, or None when every candidate collides."""
    pose = state.pose
    wp = path.waypoints
    c, s = math.cos(pose.psi), math.sin(pose.psi)
    rel = wp - np.array(pose.xy)
    local = np.column_stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]])
    local = local[np.hypot(*local.T) <= params.v_max * params.sim_time + 1.0]
    if goal_rel is None:
        lg = local_goal(path, pose)
        goal_rel = pose.to_local(lg.x, lg.y)
    cand, _, score = dwa_scores(scan, state, local, goal_rel, params, footprint_r, limits)
    k = dwa_select(cand, score)
    return None if k is None else Command(float(cand[k, 0]), float(cand[k, 1]))


# ---------------------------------------------------------------- LfH runtime


def lfh_runtime_scan(path: GlobalPath, pose: Configuration, cfg: SensorConfig = SensorConfig(),
                     footprint_r: float = FOOTPRINT_R, lookahead: float = 1.0) -> Scan:
    """Most-constrained hallucination of the global path ahead of the robot.

    The pseudo-trajectory runs from the robot through its projection on the
    path and then ``lookahead`` metres along it, truncated at the goal.
    """
    k, t, _ = _project(path, pose.xy)
    pts, _ = _walk(path, k, t, lookahead)
    traj = np.vstack([[pose.x, pose.y], np.array(pts)])
    traj = np.column_stack([traj, np.zeros(len(traj))])
    end = Configuration(traj[-1, 0], traj[-1, 1])
    window = PlanWindow(0, pose, end, end, traj, Command(0.0, 0.0), 0.0, (0.0, 0.0))
    return most_constrained_scan(window, cfg, replace(HallucinationParams(), footprint_r=footprint_r))


# ---------------------------------------------------------------- episodes


@dataclass(frozen=True)
class NavConfig:
    planner_kind: str
    weights: Optional[ModelWeights] = None
    mpc_horizon: float = 1.0
    mpc_dt: float = 0.05
    speed_cap: Optional[float] = None
    recovery: RecoveryParams = RecoveryParams()
    dwa: DWAParams = DWAParams()
    goal_tolerance: float = 0.3
    max_collisions: int = 5
    lookahead: float = 1.0
    resolution: float = 0.05
    name: str = ""

    def __post_init__(self):
        if self.planner_kind not in PLANNERS:
            raise ValueError(f"planner_kind must be one of {PLANNERS}")
        if self.planner_kind != "dwa" and self.weights is None:
            raise ValueError(f"{self.planner_kind} needs weights")
        if self.speed_cap is not None and not 0 < self.speed_cap <= 1.0:
            raise ValueError("speed_cap must lie in (0, 1.0]")
        if self.planner_kind == "dwa" and self.dwa.v_max > 1.0:
            raise ValueError("DWA v_max exceeds the command limit")


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    time: float
    collisions: int
    recovery_invocations: int
    path_length: float

    def __post_init__(self):
        if self.success and not math.isfinite(self.time):
            raise ValueError("a successful episode needs a finite time")
        if self.collisions < 0:
            raise ValueError("collisions must be non-negative")


def _raw_command(cfg: NavConfig, world: World, state: RobotState, scan: Scan, path: GlobalPath,
                 goal_rel) -> Optional[Command]:
    vel = (state.v, state.omega)
    if cfg.planner_kind == "hlsd":
        cmd = predict_action(cfg.weights, scan, goal_rel, vel)
    elif cfg.planner_kind == "lfh":
        halluc = lfh_runtime_scan(path, state.pose, scan.config, lookahead=cfg.lookahead)
        cmd = predict_action(cfg.weights, halluc, goal_rel, vel)
    else:
        return dwa_command(scan, state, path, goal_rel, cfg.dwa)
    if cfg.speed_cap is not None and cmd.v > cfg.speed_cap:
        cmd = Command(cfg.speed_cap, cmd.omega)
    return cmd


def navigate_episode(world: World, cfg: NavConfig, timeout: float = 60.0,
                     trace: Optional[Callable[[dict], None]] = None,
                     sensor: SensorConfig = SensorConfig()) -> EpisodeResult:
    """Drive from start to goal at 25 Hz.

    Each step picks the planner command and vetoes it through ``mpc_safe``,
    entering recovery when vetoed. Recovery ends as soon as a forward
    candidate passes the check: the planner's fresh command, or the
    straight probe along the current heading. That command is executed and
    the global path is replanned from the current pose. A collision leaves
    the robot at its previous pose with zero velocity, counts, and forces
    a back-up of at least ``recovery.forced_backup`` seconds.
    """
    path = plan_global(world, cfg.resolution)
    rp = cfg.recovery
    state = RobotState(world.start)
    phase: Optional[str] = None
    forced_until = -1.0
    collisions = recoveries = 0
    travelled = 0.0
    goal = np.array(world.goal.xy)
    steps = int(round(timeout / DT))

    def at_goal():
        return np.hypot(*(np.array(state.pose.xy) - goal)) <= cfg.goal_tolerance

    for _ in range(steps):
        if at_goal():
            return EpisodeResult(True, round(state.t, 10), collisions, recoveries, travelled)
        scan = lidar_scan(world, state.pose, sensor)

        def safe(c):
            return mpc_safe(scan, state, c, cfg.mpc_horizon, cfg.mpc_dt)

        lg = local_goal(path, state.pose, cfg.lookahead)
        goal_rel = state.pose.to_local(lg.x, lg.y)
        cmd, ok, shown = None, False, "nominal"
        if state.t >= forced_until - 1e-9:
            raw = _raw_command(cfg, world, state, scan, path, goal_rel)
            if raw is not None and (phase is None or raw.v > 0) and safe(raw):
                cmd, ok = raw, True
            elif phase is not None:
                probe = Command(rp.probe_speed, 0.0)
                aligned = abs(wrap_angle(path_tangent(path, state.pose.xy) - state.pose.psi)) < rp.align_tolerance
                if (phase == BACKUP or aligned) and safe(probe):
                    cmd, ok = probe, True
            if ok and phase is not None:
                phase = None
                try:
                    path = plan_global(world, cfg.resolution, start=state.pose.xy, snap_start=True)
                except NoPath:
                    pass
            elif not ok and phase is None:
                phase = ALIGN
                recoveries += 1
        if cmd is None:
            cmd, phase = recovery_command(phase, state.pose, path, False, rp)
            shown = phase
        nxt = integrate_unicycle(state, cmd, DT)
        if trace is not None:
            trace({"t": round(state.t, 10), "pose": [state.pose.x, state.pose.y, state.pose.psi],
                   "cmd": [cmd.v, cmd.omega], "safe": bool(ok), "phase": shown})
        if in_collision(world, nxt.pose):
            collisions += 1
            if collisions > cfg.max_collisions:
                return EpisodeResult(False, math.inf, collisions, recoveries, travelled)
            state = RobotState(state.pose, 0.0, 0.0, nxt.t)
            if phase is None:
                recoveries += 1
            phase = BACKUP
            forced_until = nxt.t + rp.forced_backup
            continue
        travelled += math.hypot(nxt.pose.x - state.pose.x, nxt.pose.y - state.pose.y)
        state = nxt
    if at_goal():
        return EpisodeResult(True, round(state.t, 10), collisions, recoveries, travelled)
    return EpisodeResult(False, math.inf, collisions, recoveries, travelled)
