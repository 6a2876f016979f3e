"""Random exploration in open space and the raw trajectory log it produces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from lfhnav.geometry import Configuration, Region
from lfhnav.sim import DT, RATE_HZ, Command, Limits, RobotState, World, integrate_unicycle

V_TOL = 0.02
OMEGA_TOL = 0.05

PRESETS = {
    "varying": {"v_range": (0.0, 1.0)},
    "constant04": {"v_range": (0.4, 0.4)},
}


@dataclass(frozen=True)
class ExplorationParams:
    v_range: Tuple[float, float] = (0.0, 1.0)
    omega_range: Tuple[float, float] = (-1.57, 1.57)
    hold_probability: float = 0.95
    seed: int = 42
    duration: float = 505.0
    preset: str = "varying"

    def __post_init__(self):
        lo, hi = self.v_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("v_range must lie within [0, 1.0]")
        wlo, whi = self.omega_range
        if not -1.57 <= wlo <= whi <= 1.57:
            raise ValueError("omega_range must lie within [-1.57, 1.57]")
        if not 0.0 <= self.hold_probability < 1.0:
            raise ValueError("hold_probability must lie in [0, 1)")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "ExplorationParams":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(preset=name, **{**PRESETS[name], **overrides})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["v_range"] = list(self.v_range)
        d["omega_range"] = list(self.omega_range)
        return d


@dataclass(frozen=True)
class RawRecord:
    t: float
    x: float
    y: float
    psi: float
    v: float
    omega: float

    @property
    def pose(self) -> Configuration:
        return Configuration(self.x, self.y, self.psi)


def sample_target(rng: np.random.Generator, params: ExplorationParams) -> Tuple[float, float]:
    v = float(rng.uniform(*params.v_range)) if params.v_range[1] > params.v_range[0] else params.v_range[0]
    w = float(rng.uniform(*params.omega_range))
    return v, w


def pi_rand_step(rng: np.random.Generator, state: RobotState, target: Tuple[float, float],
                 params: ExplorationParams) -> Tuple[Command, Tuple[float, float]]:
    """One decision of the random exploration policy.

    While the robot is still converging on ``target`` the target is
    commanded unchanged. Once reached, it is kept with probability
    ``hold_probability`` and otherwise replaced by a fresh uniform draw.
    """
    reached = abs(state.v - target[0]) <= V_TOL and abs(state.omega - target[1]) <= OMEGA_TOL
    if reached and rng.random() >= params.hold_probability:
        target = sample_target(rng, params)
    return Command(*target), target


def record_count(duration: float) -> int:
    return int(math.floor(duration * RATE_HZ + 1e-9))


def exploration_world() -> World:
    """Unbounded world with no obstacles."""
    origin = Configuration(0.0, 0.0, 0.0)
    return World(None, Region(), origin, origin)


def run_exploration(params: ExplorationParams) -> List[RawRecord]:
    """Drive pi_rand from the origin in empty space, logging every 25 Hz step."""
    world = exploration_world()
    assert world.obstacles.is_empty and world.bounds is None
    rng = np.random.default_rng(params.seed)
    limits = Limits(v_min=0.0)
    state = RobotState(world.start)
    target = sample_target(rng, params)
    out = []
    for k in range(record_count(params.duration)):
        p = state.pose
        out.append(RawRecord(round(k * DT, 10), p.x, p.y, p.psi, state.v, state.omega))
        cmd, target = pi_rand_step(rng, state, target, params)
        state = integrate_unicycle(state, cmd, DT, limits)
    return out


def records_to_array(records) -> np.ndarray:
    """(N, 6) array with columns t, x, y, psi, v, omega."""
    if isinstance(records, np.ndarray):
        return records
    return np.array([[r.t, r.x, r.y, r.psi, r.v, r.omega] for r in records], dtype=float).reshape(-1, 6)

