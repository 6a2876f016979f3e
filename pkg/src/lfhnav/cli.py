"""Command-line entry point: ``lfhnav <subcommand> ...``.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible world or no
path, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from lfhnav import io
from lfhnav.bench import Infeasible, WorldGenParams, aggregate_report, generate_world, run_suite
from lfhnav.datagen import ExplorationParams, PRESETS, run_exploration
from lfhnav.halluc import HallucinationParams, synthesize_dataset
from lfhnav.learn import Hyper, NonFiniteLoss, load_weights, save_weights, train
from lfhnav.nav import PLANNERS, NavConfig, NoPath, navigate_episode

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("lfhnav")


def cmd_explore(a) -> int:
    params = ExplorationParams.from_preset(a.preset, seed=a.seed, duration=a.duration)
    records = run_exploration(params)
    io.save_raw(records, params.to_dict(), a.out)
    log.info("wrote %d records to %s", len(records), a.out)
    return EXIT_OK


def cmd_hallucinate(a) -> int:
    header, raw = io.load_raw(a.raw)
    params = HallucinationParams(sampling_count=a.sampling_count, alpha=a.alpha)
    ts = synthesize_dataset(raw, params=params, seed=a.seed, mode=a.mode)
    meta = {"params": params.to_dict(), "mode": a.mode, "seed": a.seed, "raw_digest": io.raw_digest(raw),
            "raw_params": header.get("params")}
    io.save_train(ts, meta, a.out)
    log.info("wrote %d samples to %s", len(ts), a.out)
    return EXIT_OK


def cmd_train(a) -> int:
    _, ts = io.load_train(a.data)
    hyper = Hyper(learning_rate=a.lr, batch_size=a.batch, epochs=a.epochs, seed=a.seed,
                  use_velocity_input=not a.no_vel_input)
    res = train(ts, hyper, log=lambda e, l: log.info("epoch %d loss %.6g", e, l))
    save_weights(res.weights, a.out)
    log.info("wrote weights to %s", a.out)
    return EXIT_OK


def cmd_genworlds(a) -> int:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(a.count):
        world = generate_world(WorldGenParams(seed=a.seed * 100_003 + i, density=a.density))
        io.save_world(world, out / f"world_{i:03d}.json")
    log.info("wrote %d worlds to %s", a.count, out)
    return EXIT_OK


def _nav_config(planner: str, weights: Optional[str], speed_cap: Optional[float], name: str = "") -> NavConfig:
    w = load_weights(weights) if weights else None
    return NavConfig(planner, w, speed_cap=speed_cap, name=name)


def cmd_navigate(a) -> int:
    world = io.load_world(a.world)
    cfg = _nav_config(a.planner, a.weights, a.speed_cap)
    rows: List[dict] = []
    res = navigate_episode(world, cfg, a.timeout, trace=rows.append if a.trace else None)
    if a.trace:
        io.save_trace(rows, a.trace)
    print(json.dumps({"success": res.success, "time": res.time if res.success else "inf",
                      "collisions": res.collisions, "recovery_invocations": res.recovery_invocations,
                      "path_length": res.path_length}, sort_keys=True))
    return EXIT_OK


def load_arms(path) -> List[NavConfig]:
    """Arms file: a JSON list of {name, planner, weights?, speed_cap?}; weight paths are relative to the file."""
    base = Path(path).parent
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(spec, list) or not spec:
        raise ValueError("arms file must hold a non-empty JSON list")
    arms = []
    for entry in spec:
        extra = set(entry) - {"name", "planner", "weights", "speed_cap"}
        if extra:
            raise ValueError(f"unknown arm fields {sorted(extra)}")
        weights = entry.get("weights")
        arms.append(_nav_config(entry["planner"], str(base / weights) if weights else None,
                                entry.get("speed_cap"), entry.get("name", entry["planner"])))
    return arms


def cmd_bench(a) -> int:
    files = sorted(Path(a.worlds).glob("*.json"))
    if not files:
        raise ValueError(f"no world files in {a.worlds}")
    worlds = [io.load_world(f) for f in files]
    arms = load_arms(a.arms)
    report = run_suite(worlds, arms, a.timeout, a.workers,
                       progress=lambda k, n, r: log.info("episode %d/%d: %s", k + 1, n, r))
    table, rows = aggregate_report(report)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.txt").write_text(table, encoding="utf-8")
    (out / "results.csv").write_text(rows, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfhnav", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("explore", help="random exploration in open space")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--duration", type=float, default=505.0)
    s.add_argument("--preset", choices=sorted(PRESETS), default="varying")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_explore)

    s = sub.add_parser("hallucinate", help="synthesize the training set from a raw log")
    s.add_argument("--raw", required=True)
    s.add_argument("--mode", choices=["minimal", "most-constrained"], default="minimal")
    s.add_argument("--sampling-count", type=int, default=10)
    s.add_argument("--alpha", type=float, default=0.48)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_hallucinate)

    s = sub.add_parser("train", help="fit the planner network")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-vel-input", action="store_true", help="zero the velocity features")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("genworlds", help="generate benchmark worlds")
    s.add_argument("--count", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--density", type=float, default=0.4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_genworlds)

    s = sub.add_parser("navigate", help="run one episode")
    s.add_argument("--world", required=True)
    s.add_argument("--planner", choices=PLANNERS, required=True)
    s.add_argument("--weights")
    s.add_argument("--speed-cap", type=float)
    s.add_argument("--timeout", type=float, default=60.0)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_navigate)

    s = sub.add_parser("bench", help="run planner arms over a world directory")
    s.add_argument("--worlds", required=True)
    s.add_argument("--arms", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--timeout", type=float, default=60.0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NoPath, Infeasible) as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except NonFiniteLoss as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    except (ValueError, KeyError, OSError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
