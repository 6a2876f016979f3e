"""Drive one benchmark world with the DWA baseline and report the episode.

Run: python3 demos/03_navigation.py
"""

from lfhnav.bench import WorldGenParams, generate_world
from lfhnav.nav import NavConfig, local_goal, navigate_episode, plan_global

world = generate_world(WorldGenParams(seed=3))
path = plan_global(world)
print(f"{len(world.obstacles)} discs; global path {path.length:.2f} m")
print(f"first local goal: {local_goal(path, world.start)}")

phases = []
res = navigate_episode(world, NavConfig("dwa"), timeout=60, trace=lambda row: phases.append(row["phase"]))
print(f"success={res.success} time={res.time:.2f} s collisions={res.collisions} "
      f"recoveries={res.recovery_invocations}")
print(f"steps per phase: { {p: phases.count(p) for p in sorted(set(phases))} }")
