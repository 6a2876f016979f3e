"""A small suite: DWA against a briefly trained HLSD policy on five worlds.

Run: python3 demos/04_benchmark.py
"""

from lfhnav.bench import aggregate_report, generate_worlds, run_suite
from lfhnav.datagen import ExplorationParams, records_to_array, run_exploration
from lfhnav.halluc import synthesize_dataset
from lfhnav.learn import Hyper, train
from lfhnav.nav import NavConfig

raw = records_to_array(run_exploration(ExplorationParams(seed=42, duration=120)))
weights = train(synthesize_dataset(raw, seed=0), Hyper(epochs=5)).weights

worlds = generate_worlds(5, seed=0)
report = run_suite(worlds, [NavConfig("dwa", name="DWA"), NavConfig("hlsd", weights, name="HLSD")])
table, rows = aggregate_report(report)
print(table)
print(rows.splitlines()[0])
