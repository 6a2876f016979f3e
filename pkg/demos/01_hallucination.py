"""Explore open space, then hallucinate obstacles around one recorded plan.

Run: python3 demos/01_hallucination.py
"""

import numpy as np

from lfhnav.datagen import ExplorationParams, records_to_array, run_exploration
from lfhnav.halluc import (
    beam_bounds,
    build_minimal_region,
    extract_windows,
    most_constrained_scan,
    sample_scan,
    synthesize_windows,
)

raw = records_to_array(run_exploration(ExplorationParams(seed=42, duration=30)))
print(f"recorded {len(raw)} states, speeds {raw[:, 4].min():.2f}..{raw[:, 4].max():.2f} m/s")

windows = extract_windows(raw)
w = max(windows, key=lambda w: abs(w.label.omega))
print(f"window {w.index}: v={w.v_current:.2f} m/s, omega={w.label.omega:.2f} rad/s, goal {w.goal_rel}")

# the most constrained scan: every beam stops where it leaves the swept corridor
mc = most_constrained_scan(w).ranges
print(f"most-constrained scan: mean range {mc.mean():.3f} m")

# the minimal obstacle set bounds every sampled scan per beam
lo, hi = beam_bounds(w, build_minimal_region(w))
s = sample_scan(np.random.default_rng(0), lo, hi, alpha=0.48).ranges
print(f"beam bounds: {np.mean(hi - lo):.3f} m average slack; sample within bounds: {np.all((s >= lo) & (s <= hi))}")

ts = synthesize_windows(windows, seed=0)
print(f"{len(windows)} windows -> {len(ts)} training samples ({len(ts) // len(windows)} per window)")
