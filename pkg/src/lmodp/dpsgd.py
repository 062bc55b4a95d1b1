"""Desk-scale private training: multinomial logistic regression with DP-SGD.

Each step Poisson-samples a batch, clips per-example gradients in l2,
adds one noise vector to the clipped sum, divides by the realised batch
size and takes a gradient step.  Every executed step charges one RDP curve
to the ledger.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .accountant import (
    RdpCurve,
    amplified_curve,
    compose,
    default_orders,
    gaussian_curve,
    lmo_curve,
    to_dp,
)
from .errors import InfeasibleNoise, ShapeMismatch, ValidationError
from .mgf import MixtureSpec
from .sampler import GaussianParams, make_rng, sample_gaussian_noise, sample_lmo_noise
from .search import TOTAL, SearchGrid, SearchResult, default_grid

NOISE_STREAM = 1
BATCH_STREAM = 0


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    provenance: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ShapeMismatch(f"features must be a non-empty n x d matrix, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ShapeMismatch(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("features contain non-finite values")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValidationError(f"labels must lie in 0..{self.n_classes - 1}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def load_csv(path, label_column: str = "y") -> Dataset:
    """Headered CSV with integer labels in ``label_column``; the rest are features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if label_column not in header:
        raise ValidationError(f"{path}: no {label_column!r} column")
    j = header.index(label_column)
    data = np.array(rows, dtype=float)
    y = data[:, j].astype(np.int64)
    if not np.all(data[:, j] == y):
        raise ValidationError(f"{path}: labels must be integers")
    X = np.delete(data, j, axis=1)
    return Dataset(X, y, int(y.max()) + 1, provenance=str(path))


def write_csv(dataset: Dataset, path) -> None:
    cols = [f"x{i}" for i in range(dataset.dim)] + ["y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def make_blobs(n: int = 4000, d: int = 20, separation: float = 5.0, sigma: float = 1.0,
               seed: int = 0, direction: str = "diagonal") -> Dataset:
    """Two balanced Gaussian blobs at +/- (separation / 2) along a unit direction.

    ``direction="diagonal"`` spreads the offset over all coordinates,
    ``"axis"`` puts it on the first coordinate only.
    """
    rng = make_rng(seed, 7)
    if direction == "diagonal":
        u = np.full(d, 1.0 / math.sqrt(d))
    elif direction == "axis":
        u = np.zeros(d)
        u[0] = 1.0
    else:
        raise ValidationError(f"unknown direction {direction!r}")
    y = np.arange(n) % 2
    X = sigma * rng.standard_normal((n, d)) + np.where(y[:, None] == 1, 1.0, -1.0) * (
        0.5 * separation) * u
    return Dataset(X, y, 2, provenance=f"blobs(n={n},d={d},sep={separation},sigma={sigma},seed={seed})")


# ---------------------------------------------------------------------------
# model


def init_params(n_classes: int, dim: int) -> np.ndarray:
    """Weights and bias as one (V, d + 1) array; last column is the bias."""
    return np.zeros((n_classes, dim + 1))


def _check_shapes(params: np.ndarray, X: np.ndarray):
    if params.ndim != 2 or params.shape[1] != X.shape[-1] + 1:
        raise ShapeMismatch(f"params {params.shape} do not fit features of width {X.shape[-1]}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def per_sample_gradients(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rows are flattened cross-entropy gradients, one per example."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_shapes(params, X)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    probs = _softmax(Xb @ params.T)
    probs[np.arange(len(y)), y] -= 1.0
    return (probs[:, :, None] * Xb[:, None, :]).reshape(len(y), -1)


def per_sample_gradient(params: np.ndarray, x, y: int) -> np.ndarray:
    return per_sample_gradients(params, np.asarray(x)[None, :], np.array([int(y)]))[0]


def loss(params: np.ndarray, X, y) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_shapes(params, X)
    logits = X @ params[:, :-1].T + params[:, -1]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(len(y)), y]))


def clip(g: np.ndarray, C: float) -> np.ndarray:
    """g / max(1, ||g||_2 / C); rows are clipped independently for 2-D input."""
    if not C > 0:
        raise ValidationError(f"clip threshold must be positive, got {C}")
    g = np.asarray(g, dtype=float)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.maximum(1.0, norms / C)


def evaluate(params: np.ndarray, dataset: Dataset) -> dict:
    X = dataset.features
    _check_shapes(params, X)
    if params.shape[0] != dataset.n_classes:
        raise ShapeMismatch("params and dataset disagree on the number of classes")
    pred = np.argmax(X @ params[:, :-1].T + params[:, -1], axis=1)
    return {
        "accuracy": float(np.mean(pred == dataset.labels)),
        "loss": loss(params, X, dataset.labels),
    }


# ---------------------------------------------------------------------------
# training


def training_grid(budget, steps: int, **overrides) -> SearchGrid:
    """Default grid with a total-budget scope over ``steps`` steps.

    The uniform component reaches further down than the per-step grid since
    the per-step share of a multi-step budget is small.
    """
    kwargs = dict(
        steps=steps,
        budget_scope=TOTAL,
        uniform_pairs=tuple((round(lo, 5), round(lo * 1.02, 5))
                            for lo in np.geomspace(1e-3, 40.0, 80)),
    )
    kwargs.update(overrides)
    return default_grid(budget, **kwargs)


Noise = Union[SearchResult, MixtureSpec, GaussianParams, None]


@dataclass
class TrainConfig:
    steps: int
    batch_size: int
    lr: Union[float, Sequence[float], Callable[[int], float]] = 0.5
    clip: float = 1.0
    noise: Noise = None
    delta: float = 1e-10
    seed: int = 42
    alpha_max: int = 128
    amplified: bool = False
    record_metrics: bool = True
    debug: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        if not self.clip > 0:
            raise ValidationError("clip threshold must be positive")

    def learning_rate(self, j: int) -> float:
        if callable(self.lr):
            return float(self.lr(j))
        if isinstance(self.lr, (int, float)):
            return float(self.lr)
        return float(self.lr[j])

    @property
    def spec(self) -> MixtureSpec | None:
        if isinstance(self.noise, SearchResult):
            return self.noise.spec
        return self.noise if isinstance(self.noise, MixtureSpec) else None


@dataclass
class TrainLedger:
    batch_sizes: list
    step_curves: list  # None for skipped steps
    composed: RdpCurve | None
    eps_total: float
    delta: float
    wall_clock: float = 0.0
    history: list = field(default_factory=list)

    @property
    def skipped_steps(self) -> list:
        return [j for j, b in enumerate(self.batch_sizes) if b == 0]

    def recompute_total(self) -> float:
        curves = [c for c in self.step_curves if c is not None]
        if not curves:
            return math.inf
        return to_dp(compose(curves), self.delta)[0]

    def to_dict(self) -> dict:
        return {
            "batch_sizes": list(self.batch_sizes),
            "skipped_steps": self.skipped_steps,
            "step_curves": [None if c is None else c.to_dict() for c in self.step_curves],
            "composed": None if self.composed is None else self.composed.to_dict(),
            "eps_total": self.eps_total if math.isfinite(self.eps_total) else "inf",
            "delta": self.delta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainLedger":
        curves = [None if c is None else RdpCurve.from_dict(c) for c in d["step_curves"]]
        composed = None if d["composed"] is None else RdpCurve.from_dict(d["composed"])
        eps = math.inf if d["eps_total"] == "inf" else float(d["eps_total"])
        return cls(list(d["batch_sizes"]), curves, composed, eps, float(d["delta"]))

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss", "accuracy", "cumulative_eps"])
        for row in self.history:
            w.writerow([row["step"], repr(row["loss"]), repr(row["accuracy"]),
                        repr(row["cumulative_eps"]) if math.isfinite(row["cumulative_eps"])
                        else "inf"])
        return buf.getvalue()


def _step_curve(config: TrainConfig, q: float, orders) -> RdpCurve | None:
    if config.noise is None:
        return None
    if isinstance(config.noise, GaussianParams):
        # noise std is clip * sigma
        curve = gaussian_curve(config.clip * config.noise.sigma, config.clip, orders)
    else:
        curve = lmo_curve(config.spec, config.clip, orders)
        if not any(math.isfinite(e) for e in curve.eps):
            raise InfeasibleNoise("the noise spec has no finite RDP order at this clip threshold")
    return amplified_curve(curve, q) if config.amplified else curve


def _draw_noise(config: TrainConfig, dim: int, rng) -> np.ndarray:
    if isinstance(config.noise, GaussianParams):
        return sample_gaussian_noise(config.noise.sigma, config.clip, dim, rng)
    return sample_lmo_noise(config.spec, dim, rng)


def train(dataset: Dataset, config: TrainConfig) -> tuple[np.ndarray, TrainLedger]:
    """Run DP-SGD (or plain SGD when ``config.noise`` is None)."""
    if config.batch_size > dataset.n:
        raise ValidationError("expected batch size exceeds the dataset size")
    start = time.perf_counter()
    orders = default_orders(config.alpha_max)
    q = config.batch_size / dataset.n
    step_curve = _step_curve(config, q, orders)
    batch_rng = make_rng(config.seed, BATCH_STREAM)
    noise_rng = make_rng(config.seed, NOISE_STREAM)
    params = init_params(dataset.n_classes, dataset.dim)
    n_params = params.size
    X, y = dataset.features, dataset.labels

    batch_sizes, curves, history = [], [], []
    running = None
    for j in range(config.steps):
        idx = np.flatnonzero(batch_rng.random(dataset.n) < q)
        batch_sizes.append(int(idx.size))
        if idx.size == 0:
            curves.append(None)
        else:
            g = clip(per_sample_gradients(params, X[idx], y[idx]), config.clip)
            if config.debug:
                assert np.all(np.linalg.norm(g, axis=1) <= config.clip * (1 + 1e-12))
            total = g.sum(axis=0)
            if config.noise is not None:
                total = total + _draw_noise(config, n_params, noise_rng)
            params = params - config.learning_rate(j) * (total / idx.size).reshape(params.shape)
            curves.append(step_curve)
            if step_curve is not None:
                running = step_curve if running is None else compose([running, step_curve])
        if config.record_metrics:
            m = evaluate(params, dataset)
            cum = math.inf if running is None else to_dp(running, config.delta)[0]
            history.append({"step": j + 1, **m, "cumulative_eps": cum})

    charged = [c for c in curves if c is not None]
    composed = compose(charged) if charged else None
    eps_total = to_dp(composed, config.delta)[0] if composed is not None else math.inf
    ledger = TrainLedger(batch_sizes, curves, composed, eps_total, config.delta,
                         wall_clock=time.perf_counter() - start, history=history)
    return params, ledger


def save_ledger(ledger: TrainLedger, path) -> None:
    Path(path).write_text(ledger.to_json())
