"""The learned local planner: a ReLU MLP with bounded action decoding.

Weights always live in float64. Training may run its inner loop in float32
for speed; the final parameters are widened back before they are returned.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from scipy.special import expit

from lfhnav.geometry import Configuration
from lfhnav.sim import OMEGA_MAX, V_MAX, Command, Scan

ARCH = "mlp-724-256x3-2-relu"
LAYER_SIZES = (724, 256, 256, 256, 2)
N_FEATURES = LAYER_SIZES[0]
SCAN_CLIP = 1.0
MAGIC = b"LFHW0001"
OUTPUT_GAIN = 0.1


class DimensionMismatch(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    """Raised when training diverges; carries the epoch and batch where it happened."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


@dataclass(frozen=True)
class Hyper:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init: str = "he"
    use_velocity_input: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid adaptive-moment coefficients")
        if self.init != "he":
            raise ValueError(f"unknown init rule {self.init!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


@dataclass
class ModelWeights:
    """Layer parameters as (W, b) pairs with W shaped (fan_in, fan_out)."""

    layers: List[Tuple[np.ndarray, np.ndarray]]
    use_velocity_input: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layers) != len(LAYER_SIZES) - 1:
            raise DimensionMismatch(f"expected {len(LAYER_SIZES) - 1} layers, got {len(self.layers)}")
        fixed = []
        for k, (W, b) in enumerate(self.layers):
            W = np.ascontiguousarray(W, dtype=np.float64)
            b = np.ascontiguousarray(b, dtype=np.float64)
            if W.shape != LAYER_SIZES[k:k + 2] or b.shape != (LAYER_SIZES[k + 1],):
                raise DimensionMismatch(f"layer {k} has shapes {W.shape}, {b.shape}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} holds non-finite values")
            fixed.append((W, b))
        self.layers = fixed

    @classmethod
    def zeros(cls) -> "ModelWeights":
        return cls([(np.zeros(LAYER_SIZES[k:k + 2]), np.zeros(LAYER_SIZES[k + 1]))
                    for k in range(len(LAYER_SIZES) - 1)])

    @classmethod
    def init(cls, seed: int, use_velocity_input: bool = True) -> "ModelWeights":
        rng = np.random.default_rng(seed)
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(LAYER_SIZES[:-1], LAYER_SIZES[1:])):
            # a small output layer keeps the squashing nonlinearities out of saturation at start
            gain = OUTPUT_GAIN if k == len(LAYER_SIZES) - 2 else 1.0
            std = gain * math.sqrt(2.0 / fan_in)
            layers.append((rng.normal(0.0, std, (fan_in, fan_out)), np.zeros(fan_out)))
        return cls(layers, use_velocity_input)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def __eq__(self, other):
        if not isinstance(other, ModelWeights):
            return NotImplemented
        return (self.use_velocity_input == other.use_velocity_input
                and all(np.array_equal(a, c) and np.array_equal(b, d)
                        for (a, b), (c, d) in zip(self.layers, other.layers)))


def _check_features(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != N_FEATURES:
        raise DimensionMismatch(f"feature vector must have {N_FEATURES} entries, got {x.shape[-1]}")
    return x


def decode(raw: np.ndarray) -> np.ndarray:
    """Squash raw outputs into (v, omega) within the command limits."""
    out = np.empty_like(raw)
    out[..., 0] = V_MAX * expit(raw[..., 0])
    out[..., 1] = OMEGA_MAX * np.tanh(raw[..., 1])
    return out


def _forward_cache(layers, x):
    acts = [x]
    h = x
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = layers[-1]
    return acts, h @ W + b


def forward_batch(weights: ModelWeights, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Raw and decoded outputs for an (N, 724) feature batch."""
    x = _check_features(features).astype(np.float64, copy=False)
    _, raw = _forward_cache(weights.layers, x)
    return raw, decode(raw)


def forward(weights: ModelWeights, features: np.ndarray) -> Tuple[Tuple[float, float], Command]:
    x = _check_features(features)
    if x.ndim != 1:
        raise DimensionMismatch("forward expects a single feature vector")
    raw, dec = forward_batch(weights, x[None, :])
    return (float(raw[0, 0]), float(raw[0, 1])), Command(float(dec[0, 0]), float(dec[0, 1]))


def assemble_features(scans: np.ndarray, goals: np.ndarray, vels: np.ndarray,
                      use_velocity_input: bool = True, dtype=np.float64) -> np.ndarray:
    """Stack clipped scans, relative goals and velocities into (N, 724) features."""
    scans = np.atleast_2d(scans)
    if scans.shape[1] != N_FEATURES - 4:
        raise DimensionMismatch(f"scan must have {N_FEATURES - 4} beams, got {scans.shape[1]}")
    x = np.empty((len(scans), N_FEATURES), dtype=dtype)
    np.minimum(scans, SCAN_CLIP, out=x[:, :-4])
    x[:, -4:-2] = np.reshape(goals, (-1, 2))
    x[:, -2:] = np.reshape(vels, (-1, 2)) if use_velocity_input else 0.0
    return x


def goal_in_robot_frame(pose: Configuration, goal_xy: Sequence[float]) -> Tuple[float, float]:
    return pose.to_local(float(goal_xy[0]), float(goal_xy[1]))


def predict_action(weights: ModelWeights, scan: Scan, goal_rel: Sequence[float],
                   vel_in: Sequence[float]) -> Command:
    if scan.ranges.shape != (scan.config.beam_count,) or scan.config.beam_count != N_FEATURES - 4:
        raise DimensionMismatch("scan does not match the 720-beam sensor")
    x = assemble_features(scan.ranges[None, :], np.asarray(goal_rel, float), np.asarray(vel_in, float),
                          weights.use_velocity_input)
    return forward(weights, x[0])[1]


def loss_and_grads(layers, x: np.ndarray, y: np.ndarray):
    """Mean squared error of decoded outputs and its parameter gradients.

    The loss averages over samples and both action components.
    """
    acts, raw = _forward_cache(layers, x)
    sig = expit(raw[:, 0])
    th = np.tanh(raw[:, 1])
    err_v = V_MAX * sig - y[:, 0]
    err_w = OMEGA_MAX * th - y[:, 1]
    n = len(x)
    loss = (np.dot(err_v, err_v) + np.dot(err_w, err_w)) / (2 * n)
    g = np.empty_like(raw)
    g[:, 0] = err_v * (V_MAX * sig * (1.0 - sig)) / n
    g[:, 1] = err_w * (OMEGA_MAX * (1.0 - th * th)) / n
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        a = acts[k]
        grads[k] = (a.T @ g, g.sum(axis=0))
        if k:
            g = (g @ W.T) * (a > 0)
    return float(loss), grads


def dataset_digest(scans, goals, vels, labels) -> str:
    h = hashlib.sha256()
    for arr in (scans, goals, vels, labels):
        a = np.ascontiguousarray(arr, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class TrainResult:
    weights: ModelWeights
    loss_trace: List[float]


def train(d_train, hyper: Hyper = Hyper(), log=None) -> TrainResult:
    """Fit the planner by mini-batch Adam on decoded-output MSE.

    ``d_train`` is a :class:`lfhnav.halluc.TrainSet` or anything with the
    ``scans``, ``goals``, ``vels`` and ``labels`` columns. Batches are drawn
    from a seeded permutation each epoch, so the result is deterministic.
    The per-epoch loss is the sample-weighted mean of batch losses.
    """
    n = len(d_train.labels)
    if n == 0:
        raise ValueError("training set is empty")
    dt = np.dtype(hyper.dtype)
    x = assemble_features(d_train.scans, d_train.goals, d_train.vels, hyper.use_velocity_input, dt)
    y = np.asarray(d_train.labels, dtype=dt)
    init = ModelWeights.init(hyper.seed, hyper.use_velocity_input)
    params = [p.astype(dt) for W, b in init.layers for p in (W, b)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    scratch = [np.empty_like(p) for p in params]
    rng = np.random.default_rng([hyper.seed, 1])
    b1, b2 = hyper.beta1, hyper.beta2
    step = 0
    trace = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, s in enumerate(range(0, n, hyper.batch_size)):
            idx = order[s:s + hyper.batch_size]
            layers = list(zip(params[0::2], params[1::2]))
            loss, grads = loss_and_grads(layers, x[idx], y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch, bi, loss)
            total += loss * len(idx)
            step += 1
            lr_t = hyper.learning_rate * math.sqrt(1 - b2 ** step) / (1 - b1 ** step)
            flat_g = [g for pair in grads for g in pair]
            for p, g, mm, vv, tmp in zip(params, flat_g, m, v, scratch):
                mm *= b1
                np.multiply(g, 1 - b1, out=tmp)
                mm += tmp
                vv *= b2
                np.multiply(g, g, out=tmp)
                tmp *= 1 - b2
                vv += tmp
                np.sqrt(vv, out=tmp)
                tmp += hyper.eps
                np.divide(mm, tmp, out=tmp)
                tmp *= lr_t
                p -= tmp
        trace.append(total / n)
        if log is not None:
            log(epoch, trace[-1])
    weights = ModelWeights(list(zip(params[0::2], params[1::2])), hyper.use_velocity_input)
    weights.meta = {"hyper": asdict(hyper), "loss_trace": trace,
                    "dataset_digest": dataset_digest(d_train.scans, d_train.goals, d_train.vels, d_train.labels)}
    return TrainResult(weights, trace)


def mse(weights: ModelWeights, d_train) -> float:
    x = assemble_features(d_train.scans, d_train.goals, d_train.vels, weights.use_velocity_input)
    _, dec = forward_batch(weights, x)
    d = dec - np.asarray(d_train.labels, float)
    return float(np.mean(d * d))


def to_bytes(weights: ModelWeights) -> bytes:
    """Serialize as magic, header length, sorted-key JSON header, then little-endian float64 arrays."""
    header = {
        "arch": ARCH,
        "shapes": [[list(W.shape), list(b.shape)] for W, b in weights.layers],
        "dtype": "<f8",
        "use_velocity_input": weights.use_velocity_input,
        "meta": weights.meta,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(W.astype("<f8").tobytes() + b.astype("<f8").tobytes() for W, b in weights.layers)
    return MAGIC + struct.pack("<Q", len(hb)) + hb + body


def from_bytes(data: bytes) -> ModelWeights:
    if data[:len(MAGIC)] != MAGIC:
        raise ValueError("not a weights file")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off:off + hlen])
    off += hlen
    if header.get("arch") != ARCH:
        raise ValueError(f"unsupported architecture {header.get('arch')!r}")
    layers = []
    for wshape, bshape in header["shapes"]:
        arrs = []
        for shape in (wshape, bshape):
            count = int(np.prod(shape))
            arrs.append(np.frombuffer(data, "<f8", count, off).reshape(shape).astype(np.float64))
            off += 8 * count
        layers.append(tuple(arrs))
    if off != len(data):
        raise ValueError("trailing bytes in weights file")
    return ModelWeights(layers, bool(header["use_velocity_input"]), header.get("meta", {}))


def save_weights(weights: ModelWeights, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(weights))


def load_weights(path) -> ModelWeights:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def mirror_features(x: np.ndarray) -> np.ndarray:
    """Beam-reverse the scan, negate goal dy and omega."""
    y = np.array(x, dtype=float, copy=True)
    y[..., :-4] = y[..., :-4][..., ::-1]
    y[..., -3] *= -1
    y[..., -1] *= -1
    return y


def build_symmetric(seed: int, scale: float = 1.0) -> ModelWeights:
    """Random weights that are exactly equivariant under :func:`mirror_features`.

    Hidden units come in mirror pairs: unit 2k reads the input directly and
    unit 2k+1 reads its mirror image through the same weights. Later layers
    are built so the pair structure is preserved, and the output reads v
    through a pair-symmetric row and omega through a pair-antisymmetric one.
    """
    rng = np.random.default_rng(seed)
    n_in, h = LAYER_SIZES[0], LAYER_SIZES[1]
    half = h // 2
    P = np.eye(n_in)
    P[:n_in - 4] = P[:n_in - 4][::-1]
    P[n_in - 3, n_in - 3] = -1
    P[n_in - 1, n_in - 1] = -1
    A = rng.normal(0, scale * math.sqrt(2 / n_in), (n_in, half))
    W0 = np.empty((n_in, h))
    W0[:, 0::2] = A
    W0[:, 1::2] = P @ A
    b0 = np.repeat(rng.normal(0, 0.1, half), 2)
    layers = [(W0, b0)]
    for _ in range(2):
        B = rng.normal(0, scale * math.sqrt(2 / h), (half, half))
        C = rng.normal(0, scale * math.sqrt(2 / h), (half, half))
        W = np.empty((h, h))
        # swapping every pair on the input must swap every pair on the output
        W[0::2, 0::2] = B
        W[1::2, 0::2] = C
        W[0::2, 1::2] = C
        W[1::2, 1::2] = B
        layers.append((W, np.repeat(rng.normal(0, 0.1, half), 2)))
    u = rng.normal(0, 0.1, half)
    w = rng.normal(0, 0.1, half)
    Wout = np.empty((h, 2))
    Wout[0::2, 0] = u
    Wout[1::2, 0] = u
    Wout[0::2, 1] = w
    Wout[1::2, 1] = -w
    layers.append((Wout, np.array([rng.normal(0, 0.1), 0.0])))
    return ModelWeights(layers)
