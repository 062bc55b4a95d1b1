"""Offline grid search for LMO noise parameters under a privacy budget.

Every candidate in the grid is turned into a per-step RDP curve; candidates
whose converted (eps, delta) guarantee fits the budget are feasible, and the
feasible one with the highest usefulness P(|noise| <= gamma) wins.  Ties go
to the candidate that comes first in the fixed enumeration order
(mode, weights, k, theta, lambda, a, b_u).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .accountant import (
    PrivacyBudget,
    RdpCurve,
    compose,
    default_orders,
    lmo_curve,
    to_dp,
    to_dp_max,
)
from .errors import GridTooLarge, NoFeasibleCandidate, SchemaError, ValidationError
from .mgf import (
    DOMAIN_MARGIN,
    LINEAR,
    MIXTURE,
    Degenerate,
    Exponential,
    Gamma,
    MixtureSpec,
    Uniform,
    log_mgf,
    log_mgf_derivative,
)

SCHEMA_VERSION = 1
PER_STEP = "per_step"
TOTAL = "total"
COMPONENT_ORDER = ("gamma", "exp", "uniform", "degenerate")
DEFAULT_WEIGHTS = tuple(round(0.1 * i, 1) for i in range(1, 10))


# ---------------------------------------------------------------------------
# scalar objectives


def usefulness(spec: MixtureSpec, gamma: float) -> float:
    """P(|noise| <= gamma) = 1 - M(-gamma)."""
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    return float(-math.expm1(log_mgf(spec, -gamma)))


def pure_dp_epsilon(spec: MixtureSpec, sensitivity: float) -> float:
    """Pure-DP level log[M'(0) / M'(-sensitivity)] of the two-fold mechanism."""
    if not sensitivity > 0:
        raise ValidationError(f"sensitivity must be positive, got {sensitivity}")
    return float(log_mgf_derivative(spec, 0.0) - log_mgf_derivative(spec, -sensitivity))


def mechanism_cdf(spec: MixtureSpec, query_value: float, x):
    """CDF of ``query_value + noise`` at ``x``; vectorised over ``x``."""
    d = np.asarray(x, dtype=float) - query_value
    tail = 0.5 * np.exp(log_mgf(spec, -np.abs(d)))
    out = np.where(d >= 0, 1.0 - tail, tail)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class SearchGrid:
    budget: PrivacyBudget
    components: tuple = ("gamma", "exp", "uniform")
    weights: tuple = DEFAULT_WEIGHTS
    gamma_shapes: tuple = (1.0,)
    gamma_scales: tuple = (1.0,)
    exp_rates: tuple = (1.0,)
    uniform_pairs: tuple = ((0.0, 1.0),)
    degenerate_values: tuple = (1.0,)
    mode: str = MIXTURE
    alpha_max: int = 128
    sensitivity: float = 1.0
    steps: int = 1
    budget_scope: str = PER_STEP
    usefulness_gamma: float | None = None
    aggregation: str = "min"
    max_candidates: int = 10_000_000

    def __post_init__(self):
        comps = tuple(c for c in COMPONENT_ORDER if c in self.components)
        if len(comps) != len(self.components) or not comps:
            raise ValidationError(f"components must be distinct members of {COMPONENT_ORDER}")
        object.__setattr__(self, "components", comps)
        for name in ("weights", "gamma_shapes", "gamma_scales", "exp_rates", "degenerate_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValidationError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        pairs = tuple((float(a), float(b)) for a, b in self.uniform_pairs)
        if not pairs:
            raise ValidationError("uniform_pairs must be non-empty")
        object.__setattr__(self, "uniform_pairs", pairs)
        if self.mode not in (MIXTURE, LINEAR):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.budget_scope not in (PER_STEP, TOTAL):
            raise ValidationError(f"unknown budget scope {self.budget_scope!r}")
        if self.aggregation not in ("min", "max"):
            raise ValidationError(f"aggregation must be 'min' or 'max'")
        if self.steps < 1 or self.sensitivity <= 0:
            raise ValidationError("steps >= 1 and sensitivity > 0 required")
        # builds every distinct component once, which validates parameters
        self._component_params()

    @property
    def gamma(self) -> float:
        return self.sensitivity if self.usefulness_gamma is None else self.usefulness_gamma

    @property
    def orders(self) -> tuple:
        return default_orders(self.alpha_max)

    def _component_params(self) -> list[list]:
        table = {
            "gamma": [Gamma(k, th) for k in self.gamma_shapes for th in self.gamma_scales],
            "exp": [Exponential(r) for r in self.exp_rates],
            "uniform": [Uniform(a, b) for a, b in self.uniform_pairs],
            "degenerate": [Degenerate(c) for c in self.degenerate_values],
        }
        return [table[c] for c in self.components]

    def weight_tuples(self) -> list[tuple]:
        if len(self.components) == 1:
            # a lone component is its own distribution whatever the weight in mixture mode
            return [(w,) for w in self.weights] if self.mode == LINEAR else [(1.0,)]
        return list(itertools.product(self.weights, repeat=len(self.components)))

    def size(self) -> int:
        n = len(self.weight_tuples())
        for params in self._component_params():
            n *= len(params)
        return n

    def candidate(self, index: int) -> MixtureSpec:
        params = self._component_params()
        inner = [len(p) for p in params]
        wi, rest = divmod(index, int(np.prod(inner)))
        picks = np.unravel_index(rest, inner)
        weights = self.weight_tuples()[wi]
        return MixtureSpec(
            tuple((w, params[i][int(p)]) for i, (w, p) in enumerate(zip(weights, picks))),
            self.mode,
        )

    def candidates(self):
        for i in range(self.size()):
            yield self.candidate(i)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budget"] = {"eps": self.budget.eps, "delta": self.budget.delta}
        d["components"] = list(self.components)
        d["uniform_pairs"] = [list(p) for p in self.uniform_pairs]
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchGrid":
        d = dict(d)
        try:
            d["budget"] = PrivacyBudget(float(d["budget"]["eps"]), float(d["budget"]["delta"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError("grid config needs budget {eps, delta}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown grid fields: {sorted(unknown)}")
        for k in ("components", "weights", "gamma_shapes", "gamma_scales", "exp_rates",
                  "degenerate_values"):
            if k in d:
                d[k] = tuple(d[k])
        if "uniform_pairs" in d:
            d["uniform_pairs"] = tuple(tuple(p) for p in d["uniform_pairs"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_grid(budget: PrivacyBudget, **overrides) -> SearchGrid:
    """The shipped three-component grid used by the comparison harness."""
    kwargs = dict(
        budget=budget,
        components=("gamma", "exp", "uniform"),
        mode=LINEAR,
        weights=DEFAULT_WEIGHTS,
        gamma_shapes=(2.0, 10.0, 50.0),
        gamma_scales=(1e-4, 1e-3, 1e-2),
        exp_rates=(100.0, 1000.0, 10000.0),
        uniform_pairs=tuple(
            (round(lo, 4), round(lo * 1.02, 4))
            for lo in np.geomspace(0.05, 40.0, 60)
        ),
    )
    kwargs.update(overrides)
    return SearchGrid(**kwargs)


# ---------------------------------------------------------------------------
# vectorised evaluation


@dataclass
class _Tables:
    """Per-component log-MGF tables on the evaluation points."""

    points: np.ndarray
    n_orders: int
    logs: list = field(default_factory=list)  # [component][weight?][param, point]


def _component_table(dists, points: np.ndarray) -> np.ndarray:
    out = np.empty((len(dists), len(points)))
    for i, d in enumerate(dists):
        ok = points < d.sup - DOMAIN_MARGIN
        row = np.full(len(points), math.inf)
        row[ok] = d.log_mgf(points[ok])
        out[i] = row
    return out


def _build_tables(grid: SearchGrid) -> _Tables:
    C = grid.sensitivity
    alphas = np.array(grid.orders)
    points = np.concatenate([C * (alphas - 1.0), -C * alphas, [-grid.gamma]])
    tables = _Tables(points=points, n_orders=len(alphas))
    for dists in grid._component_params():
        if grid.mode == MIXTURE:
            tables.logs.append(_component_table(dists, points))
        else:
            tables.logs.append({w: _component_table(dists, w * points) for w in grid.weights})
    return tables


def _log_mgf_block(grid: SearchGrid, tables: _Tables, weights: tuple) -> np.ndarray:
    """log M at every point for every parameter combination: shape (*P, n_points)."""
    n = len(weights)
    parts = []
    for i in range(n):
        shape = [1] * n + [len(tables.points)]
        if grid.mode == MIXTURE:
            tab = tables.logs[i]
        else:
            tab = tables.logs[i][weights[i]]
        shape[i] = tab.shape[0]
        parts.append(tab.reshape(shape))
    if grid.mode == LINEAR:
        return sum(parts[1:], parts[0])
    lw = np.log(np.asarray(weights) / np.sum(weights))
    full = np.broadcast_shapes(*(p.shape for p in parts))
    stacked = np.stack([np.broadcast_to(lw[i] + p, full) for i, p in enumerate(parts)])
    with np.errstate(invalid="ignore"):
        out = logsumexp(stacked, axis=0)
    # logsumexp returns nan when every term is +inf
    return np.where(np.isnan(out), math.inf, out)


def _evaluate_block(grid: SearchGrid, tables: _Tables, weights: tuple):
    L = _log_mgf_block(grid, tables, weights)
    n = tables.n_orders
    a = np.array(grid.orders)
    up = np.log(a / (2 * a - 1)) + L[..., :n]
    down = np.log((a - 1) / (2 * a - 1)) + L[..., n:2 * n]
    with np.errstate(invalid="ignore"):
        eps = np.maximum(np.logaddexp(up, down) / (a - 1), 0.0)
    eps = np.where(np.isnan(eps), math.inf, eps)
    if grid.budget_scope == TOTAL:
        eps = eps * grid.steps
    conv = eps + math.log(1.0 / grid.budget.delta) / (a - 1)
    if grid.aggregation == "min":
        score = conv.min(axis=-1)
    else:
        finite = np.isfinite(conv)
        score = np.where(finite.any(axis=-1), np.where(finite, conv, -math.inf).max(axis=-1),
                         math.inf)
    feasible = score <= grid.budget.eps
    use = -np.expm1(L[..., -1])
    return feasible.ravel(), use.ravel()


def _best_in_chunk(grid, tables, chunk, excluded):
    best_u, best_idx = -math.inf, -1
    wts = grid.weight_tuples()
    inner = grid.size() // len(wts)
    for wi in chunk:
        feasible, use = _evaluate_block(grid, tables, wts[wi])
        base = wi * inner
        if excluded:
            for idx in excluded:
                if base <= idx < base + inner:
                    feasible[idx - base] = False
        if not feasible.any():
            continue
        masked = np.where(feasible, use, -math.inf)
        j = int(np.argmax(masked))
        if masked[j] > best_u:
            best_u, best_idx = float(masked[j]), base + j
    return best_u, best_idx


def _search_index(grid: SearchGrid, excluded: set, workers: int) -> int:
    tables = _build_tables(grid)
    n_w = len(grid.weight_tuples())
    if workers <= 1:
        results = [_best_in_chunk(grid, tables, range(n_w), excluded)]
    else:
        chunks = np.array_split(np.arange(n_w), workers)
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda c: _best_in_chunk(grid, tables, c, excluded), chunks))
    best_u, best_idx = -math.inf, -1
    for u, idx in results:
        if idx < 0:
            continue
        if u > best_u or (u == best_u and idx < best_idx):
            best_u, best_idx = u, idx
    return best_idx


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class SearchResult:
    spec: MixtureSpec
    curve: RdpCurve
    eps_total: float
    argmin_alpha: float
    usefulness: float
    budget: PrivacyBudget
    sensitivity: float = 1.0
    steps: int = 1
    budget_scope: str = PER_STEP
    grid_fingerprint: str = ""
    seed: int = 42
    created_at: str = "1970-01-01T00:00:00+00:00"

    def __post_init__(self):
        if self.eps_total > self.budget.eps:
            raise ValidationError(
                f"eps_total {self.eps_total} exceeds the budget {self.budget.eps}")
        if not 0.0 <= self.usefulness <= 1.0:
            raise ValidationError(f"usefulness {self.usefulness} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "curve": self.curve.to_dict(),
            "eps_total": self.eps_total,
            "argmin_alpha": self.argmin_alpha,
            "usefulness": self.usefulness,
            "budget": {"eps": self.budget.eps, "delta": self.budget.delta},
            "sensitivity": self.sensitivity,
            "steps": self.steps,
            "budget_scope": self.budget_scope,
            "grid_fingerprint": self.grid_fingerprint,
            "seed": self.seed,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        if d.get("version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported result version {d.get('version')!r}")
        try:
            return cls(
                spec=MixtureSpec.from_dict(d["spec"]),
                curve=RdpCurve.from_dict(d["curve"]),
                eps_total=float(d["eps_total"]),
                argmin_alpha=float(d["argmin_alpha"]),
                usefulness=float(d["usefulness"]),
                budget=PrivacyBudget(float(d["budget"]["eps"]), float(d["budget"]["delta"])),
                sensitivity=float(d.get("sensitivity", 1.0)),
                steps=int(d.get("steps", 1)),
                budget_scope=d.get("budget_scope", PER_STEP),
                grid_fingerprint=d.get("grid_fingerprint", ""),
                seed=int(d.get("seed", 42)),
                created_at=d.get("created_at", ""),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed search result: missing {exc}") from exc


def save_result(result: SearchResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2) + "\n")


def load_result(path) -> SearchResult:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON") from exc
    return SearchResult.from_dict(d)


def _creation_stamp() -> str:
    # reproducible by default; set SOURCE_DATE_EPOCH for a real stamp
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat()


def evaluate_candidate(spec: MixtureSpec, grid: SearchGrid) -> tuple[RdpCurve, float, float]:
    """Scalar-path accounting: (per-step curve, converted eps, argmin order)."""
    curve = lmo_curve(spec, grid.sensitivity, grid.orders)
    charged = compose([curve] * grid.steps) if grid.budget_scope == TOTAL else curve
    convert = to_dp if grid.aggregation == "min" else to_dp_max
    eps, alpha = convert(charged, grid.budget.delta)
    return curve, eps, alpha


def search_optimal(grid: SearchGrid, seed: int = 42, workers: int = 1) -> SearchResult:
    """Most useful budget-feasible candidate of ``grid``."""
    n = grid.size()
    if n > grid.max_candidates:
        raise GridTooLarge(f"grid has {n} candidates, cap is {grid.max_candidates}")
    excluded: set = set()
    while True:
        idx = _search_index(grid, excluded, workers)
        if idx < 0:
            raise NoFeasibleCandidate("no candidate in the grid meets the budget")
        spec = grid.candidate(idx)
        try:
            curve, eps, alpha = evaluate_candidate(spec, grid)
        except Exception:
            eps = math.inf
        if eps <= grid.budget.eps:
            break
        # vectorised and scalar paths disagreed at the boundary
        excluded.add(idx)
    return SearchResult(
        spec=spec,
        curve=curve,
        eps_total=eps,
        argmin_alpha=alpha,
        usefulness=usefulness(spec, grid.gamma),
        budget=grid.budget,
        sensitivity=grid.sensitivity,
        steps=grid.steps,
        budget_scope=grid.budget_scope,
        grid_fingerprint=grid.fingerprint(),
        seed=seed,
        created_at=_creation_stamp(),
    )


def with_budget(grid: SearchGrid, eps: float, delta: float | None = None, **changes) -> SearchGrid:
    delta = grid.budget.delta if delta is None else delta
    return replace(grid, budget=PrivacyBudget(eps, delta), **changes)
