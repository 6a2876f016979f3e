"""File formats: world JSON, raw and training JSON Lines, episode traces.

Everything is written with sorted keys and shortest round-trip floats so
identical inputs give identical bytes. Paths ending in ``.gz`` are
transparently compressed (with a zero mtime, to stay reproducible).
"""

from __future__ import annotations

import gzip
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np

from lfhnav.datagen import RawRecord, records_to_array
from lfhnav.geometry import CircularSegment, Configuration, Disc, Region, Stadium
from lfhnav.halluc import KIND_CONSTRAINED, KIND_EMPTY, KIND_MINIMAL, TrainSet
from lfhnav.sim import World

WORLD_SCHEMA = "lfhnav.world/1"
RAW_SCHEMA = "lfhnav.raw/1"
TRAIN_SCHEMA = "lfhnav.train/1"
KIND_NAMES = {KIND_MINIMAL: "minimal", KIND_EMPTY: "empty", KIND_CONSTRAINED: "most-constrained"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}


class FormatError(ValueError):
    pass


class _Writer:
    def __init__(self, path):
        path = os.fspath(path)
        self.raw = open(path, "wb")
        self.fh = gzip.GzipFile(filename="", mode="wb", fileobj=self.raw, mtime=0) if path.endswith(".gz") else None

    def write(self, text: str):
        (self.fh or self.raw).write(text.encode("utf-8"))

    def close(self):
        if self.fh is not None:
            self.fh.close()
        self.raw.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _lines(path) -> Iterable[str]:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield line


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def array_digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f8").tobytes()).hexdigest()


# ---------------------------------------------------------------- worlds

_PRIM_FIELDS = {"disc": {"type", "center", "radius"}, "stadium": {"type", "a", "b", "radius"},
                "segment": {"type", "center", "radius", "p", "q", "side"}}
_WORLD_FIELDS = {"schema", "bounds", "start", "goal", "obstacles"}


def _prim_to_dict(p) -> dict:
    if isinstance(p, Disc):
        return {"type": "disc", "center": list(p.center), "radius": p.radius}
    if isinstance(p, Stadium):
        return {"type": "stadium", "a": list(p.a), "b": list(p.b), "radius": p.radius}
    if isinstance(p, CircularSegment):
        return {"type": "segment", "center": list(p.center), "radius": p.radius, "p": list(p.p),
                "q": list(p.q), "side": p.side}
    raise TypeError(f"cannot serialize {type(p).__name__}")


def _prim_from_dict(d: dict):
    kind = d.get("type")
    if kind not in _PRIM_FIELDS:
        raise FormatError(f"unknown obstacle type {kind!r}")
    extra = set(d) - _PRIM_FIELDS[kind]
    missing = _PRIM_FIELDS[kind] - set(d)
    if extra or missing:
        raise FormatError(f"{kind} obstacle: unknown fields {sorted(extra)}, missing {sorted(missing)}")
    if kind == "disc":
        return Disc(tuple(d["center"]), d["radius"])
    if kind == "stadium":
        return Stadium(tuple(d["a"]), tuple(d["b"]), d["radius"])
    return CircularSegment(tuple(d["center"]), d["radius"], tuple(d["p"]), tuple(d["q"]), d["side"])


def world_to_dict(world: World) -> dict:
    return {
        "schema": WORLD_SCHEMA,
        "bounds": None if world.bounds is None else [float(b) for b in world.bounds],
        "start": [world.start.x, world.start.y, world.start.psi],
        "goal": [world.goal.x, world.goal.y, world.goal.psi],
        "obstacles": [_prim_to_dict(p) for p in world.obstacles.primitives],
    }


def world_from_dict(d: dict) -> World:
    if not isinstance(d, dict):
        raise FormatError("world must be a JSON object")
    extra = set(d) - _WORLD_FIELDS
    if extra:
        raise FormatError(f"unknown world fields {sorted(extra)}")
    if d.get("schema") != WORLD_SCHEMA:
        raise FormatError(f"expected schema {WORLD_SCHEMA!r}, got {d.get('schema')!r}")
    try:
        bounds = None if d["bounds"] is None else tuple(float(b) for b in d["bounds"])
        if bounds is not None and (len(bounds) != 4 or bounds[0] >= bounds[2] or bounds[1] >= bounds[3]):
            raise FormatError("bounds must be [xmin, ymin, xmax, ymax] with positive extent")
        obstacles = Region(tuple(_prim_from_dict(p) for p in d["obstacles"]))
        return World(bounds, obstacles, Configuration(*d["start"]), Configuration(*d["goal"]))
    except KeyError as exc:
        raise FormatError(f"missing world field {exc}") from None
    except TypeError as exc:
        raise FormatError(str(exc)) from None


def save_world(world: World, path) -> None:
    Path(path).write_text(dumps(world_to_dict(world)) + "\n", encoding="utf-8")


def load_world(path) -> World:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return world_from_dict(d)


# ---------------------------------------------------------------- raw log

_RAW_KEYS = ("t", "x", "y", "psi", "v", "omega")


def save_raw(records: List[RawRecord], params: dict, path) -> None:
    with _Writer(path) as w:
        w.write(dumps({"schema": RAW_SCHEMA, "params": params, "count": len(records)}) + "\n")
        for r in records:
            w.write(dumps({k: getattr(r, k) for k in _RAW_KEYS}) + "\n")


def load_raw(path) -> Tuple[dict, np.ndarray]:
    """Header and (N, 6) record array."""
    lines = iter(_lines(path))
    try:
        header = json.loads(next(lines))
    except StopIteration:
        raise FormatError(f"{path} is empty") from None
    if header.get("schema") != RAW_SCHEMA:
        raise FormatError(f"expected schema {RAW_SCHEMA!r}")
    rows = []
    for line in lines:
        d = json.loads(line)
        if set(d) != set(_RAW_KEYS):
            raise FormatError(f"raw record has fields {sorted(d)}")
        rows.append([d[k] for k in _RAW_KEYS])
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    if not np.all(np.isfinite(arr)):
        raise FormatError("raw records must be finite")
    if "count" in header and header["count"] != len(arr):
        raise FormatError(f"header announces {header['count']} records, found {len(arr)}")
    return header, arr


def raw_digest(d_raw) -> str:
    return array_digest(records_to_array(d_raw))


# ---------------------------------------------------------------- training set

SCAN_DECIMALS = 6


def _fmt_scan(row: np.ndarray) -> str:
    return ("[" + ",".join([f"%.{SCAN_DECIMALS}f"] * len(row)) + "]") % tuple(row.tolist())


def save_train(ts: TrainSet, header: dict, path) -> None:
    """One JSON object per sample; scans are written with fixed six decimals."""
    with _Writer(path) as w:
        w.write(dumps({"schema": TRAIN_SCHEMA, "count": len(ts), **header}) + "\n")
        for i in range(len(ts)):
            rest = dumps({"goal": ts.goals[i].tolist(), "vel": ts.vels[i].tolist(), "label": ts.labels[i].tolist(),
                          "kind": KIND_NAMES[int(ts.kind[i])], "window": int(ts.window[i])})
            w.write('{"scan":' + _fmt_scan(ts.scans[i]) + "," + rest[1:] + "\n")


def load_train(path) -> Tuple[dict, TrainSet]:
    lines = iter(_lines(path))
    try:
        header = json.loads(next(lines))
    except StopIteration:
        raise FormatError(f"{path} is empty") from None
    if header.get("schema") != TRAIN_SCHEMA:
        raise FormatError(f"expected schema {TRAIN_SCHEMA!r}")
    scans, goals, vels, labels, kinds, windows = [], [], [], [], [], []
    for line in lines:
        d = json.loads(line)
        try:
            scans.append(d["scan"])
            goals.append(d["goal"])
            vels.append(d["vel"])
            labels.append(d["label"])
            kinds.append(KIND_CODES[d.get("kind", "minimal")])
            windows.append(d.get("window", -1))
        except KeyError as exc:
            raise FormatError(f"training sample misses {exc}") from None
    ts = TrainSet(np.array(scans, dtype=np.float32).reshape(-1, 720), np.array(goals, float).reshape(-1, 2),
                  np.array(vels, float).reshape(-1, 2), np.array(labels, float).reshape(-1, 2),
                  np.array(kinds, dtype=np.int8), np.array(windows, dtype=np.int32))
    if header.get("count", len(ts)) != len(ts):
        raise FormatError(f"header announces {header['count']} samples, found {len(ts)}")
    if not all(np.all(np.isfinite(a)) for a in (ts.scans, ts.goals, ts.vels, ts.labels)):
        raise FormatError("training samples must be finite")
    return header, ts


# ---------------------------------------------------------------- traces


def save_trace(rows: Iterable[dict], path) -> None:
    with _Writer(path) as w:
        for r in rows:
            w.write(dumps({k: (v if not isinstance(v, float) or math.isfinite(v) else None)
                           for k, v in r.items()}) + "\n")
