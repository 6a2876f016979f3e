"""Procedural corridor worlds, planner suites and their aggregate reports."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lfhnav.geometry import Configuration, Disc, Region
from lfhnav.nav import EpisodeResult, NavConfig, NoPath, navigate_episode, plan_global
from lfhnav.sim import World

MAX_ATTEMPTS = 100


class Infeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class WorldGenParams:
    seed: int = 0
    length: float = 8.0
    width: float = 3.0
    density: float = 0.4
    radius_range: Tuple[float, float] = (0.1, 0.2)
    endpoint_clearance: float = 0.5

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("density must be non-negative")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radii must be positive and ordered")
        if self.length <= 2 * self.endpoint_clearance or self.width <= 2 * self.endpoint_clearance:
            raise ValueError("course too small for the start and goal clearances")


def _scatter(rng: np.random.Generator, p: WorldGenParams, start, goal) -> List[Disc]:
    n = int(round(p.density * p.length * p.width))
    discs = []
    while len(discs) < n:
        c = (float(rng.uniform(0, p.length)), float(rng.uniform(0, p.width)))
        r = float(rng.uniform(*p.radius_range))
        if any(math.hypot(c[0] - e[0], c[1] - e[1]) < p.endpoint_clearance + r for e in (start, goal)):
            continue
        discs.append(Disc(c, r))
    return discs


def generate_world(params: WorldGenParams) -> World:
    """A walled corridor with start and goal at the two ends and random discs between.

    Each attempt draws from its own (seed, attempt) stream; worlds without
    a global path are discarded.
    """
    mid = params.width / 2
    start = (params.endpoint_clearance, mid)
    goal = (params.length - params.endpoint_clearance, mid)
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([params.seed, attempt])
        world = World((0.0, 0.0, params.length, params.width), Region(tuple(_scatter(rng, params, start, goal))),
                      Configuration(*start, 0.0), Configuration(*goal, 0.0))
        try:
            plan_global(world)
        except NoPath:
            continue
        return world
    raise Infeasible(f"no feasible world after {MAX_ATTEMPTS} attempts (density {params.density})")


def generate_worlds(count: int, seed: int, **kwargs) -> List[World]:
    return [generate_world(WorldGenParams(seed=seed * 100_003 + i, **kwargs)) for i in range(count)]


@dataclass
class SuiteReport:
    planners: List[str]
    results: Dict[str, List[EpisodeResult]]

    def rows(self) -> List[dict]:
        out = []
        for name in self.planners:
            for w, r in enumerate(self.results[name]):
                out.append({"planner": name, "world": w, **asdict(r)})
        return out


@dataclass(frozen=True)
class Aggregate:
    planner: str
    episodes: int
    successes: int
    failures: int
    mean_time: float
    std_time: float
    collisions: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0


def aggregate(name: str, results: Sequence[EpisodeResult]) -> Aggregate:
    """Mean and population std over finite times; all-failed planners get inf."""
    times = np.array([r.time for r in results if math.isfinite(r.time)], dtype=float)
    mean = float(times.mean()) if len(times) else math.inf
    std = float(times.std()) if len(times) else math.inf
    ok = sum(r.success for r in results)
    return Aggregate(name, len(results), ok, len(results) - ok, mean, std,
                     sum(r.collisions for r in results))


def _episode(job):
    world, cfg, timeout = job
    try:
        return navigate_episode(world, cfg, timeout)
    except NoPath:
        return EpisodeResult(False, math.inf, 0, 0, 0.0)


def run_suite(worlds: Sequence[World], planners: Sequence[NavConfig], timeout: float = 60.0,
              workers: int = 1, progress=None) -> SuiteReport:
    """Run every (world, planner) episode.

    Results are keyed by position, so the worker count never changes the
    report.
    """
    names = [p.name or p.planner_kind for p in planners]
    if len(set(names)) != len(names):
        raise ValueError("planner names must be unique")
    jobs = [(w, p, timeout) for p in planners for w in worlds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            flat = list(ex.map(_episode, jobs))
    else:
        flat = []
        for k, job in enumerate(jobs):
            flat.append(_episode(job))
            if progress is not None:
                progress(k, len(jobs), flat[-1])
    n = len(worlds)
    return SuiteReport(names, {name: flat[i * n:(i + 1) * n] for i, name in enumerate(names)})


def format_time(mean: float, std: float) -> str:
    if not math.isfinite(mean):
        return "inf"
    return f"{mean:.1f}±{std:.1f}"


def render_table(report: SuiteReport) -> str:
    if not report.planners:
        raise ValueError("report is empty")
    head = f"{'planner':<12}{'time (s)':>14}{'success':>10}{'failures':>10}{'collisions':>12}"
    lines = [head, "-" * len(head)]
    for name in report.planners:
        a = aggregate(name, report.results[name])
        lines.append(f"{name:<12}{format_time(a.mean_time, a.std_time):>14}{a.success_rate:>10.2f}"
                     f"{a.failures:>10d}{a.collisions:>12d}")
    return "\n".join(lines) + "\n"


CSV_FIELDS = ["planner", "world", "success", "time", "collisions", "recovery_invocations", "path_length"]


def render_csv(report: SuiteReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in report.rows():
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def read_csv(text: str) -> Dict[str, List[EpisodeResult]]:
    out: Dict[str, List[EpisodeResult]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        out.setdefault(row["planner"], []).append(EpisodeResult(
            row["success"] == "True", float(row["time"]), int(row["collisions"]),
            int(row["recovery_invocations"]), float(row["path_length"])))
    return out


def aggregate_report(report: SuiteReport) -> Tuple[str, str]:
    """Rendered text table and the CSV of raw episode rows."""
    return render_table(report), render_csv(report)
