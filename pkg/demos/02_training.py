"""Fit the planner network on a small hallucinated dataset and save it.

Run: python3 demos/02_training.py
"""

import tempfile
from pathlib import Path

from lfhnav.datagen import ExplorationParams, records_to_array, run_exploration
from lfhnav.halluc import synthesize_dataset
from lfhnav.learn import Hyper, load_weights, mse, save_weights, train

raw = records_to_array(run_exploration(ExplorationParams(seed=1, duration=60)))
ts = synthesize_dataset(raw, seed=0)
res = train(ts, Hyper(epochs=5, seed=0), log=lambda e, l: print(f"epoch {e} loss {l:.5f}"))
print(f"training MSE {mse(res.weights, ts):.5f}")

path = Path(tempfile.mkdtemp()) / "weights.bin"
save_weights(res.weights, path)
print(f"round trip equal: {load_weights(path) == res.weights}")
