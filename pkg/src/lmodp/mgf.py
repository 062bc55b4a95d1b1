"""Inverse-scale distributions and their moment-generating functions.

The noise is Laplace with scale ``b = 1/Y`` where ``Y`` is drawn from a
weighted combination of Gamma, Exponential and Uniform components.  Every
quantity the accountant needs is an MGF of ``Y`` (or its derivative), so
this module evaluates them in log space and is the numerical core of the
package.

Two composition modes are supported:

* ``"mixture"``: ``Y`` is drawn from component ``i`` with probability
  ``a_i / sum(a)``; ``M(t) = sum_i abar_i M_i(t)``.
* ``"linear"``: ``Y = sum_i a_i Y_i`` for independent ``Y_i``;
  ``M(t) = prod_i M_i(a_i t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, ValidationError

MIXTURE = "mixture"
LINEAR = "linear"
MODES = (MIXTURE, LINEAR)

MAX_COMPONENTS = 8
# distance kept from a pole of the MGF
DOMAIN_MARGIN = 1e-9
# beyond this |t * width| the uniform MGF is evaluated with an asymptotic form
_EXP_CUTOFF = 700.0
_SERIES_CUTOFF = 1e-3


def _log_phi(x):
    """log((e^x - 1) / x), the uniform-on-[0, 1] log MGF."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    big = x > _EXP_CUTOFF
    mid = (~big) & (x != 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xm = x[mid]
        out[mid] = np.log(np.expm1(xm) / xm)
        xb = x[big]
        out[big] = xb + np.log1p(-np.exp(-xb)) - np.log(xb)
    return out


def _log_dphi(x):
    """log of d/dx [(e^x - 1) / x]."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_CUTOFF
    big = x > _EXP_CUTOFF
    mid = ~(small | big)
    xs = x[small]
    out[small] = np.log(0.5 + xs / 3.0 + xs * xs / 8.0 + xs ** 3 / 30.0)
    with np.errstate(over="ignore"):
        xm = x[mid]
        out[mid] = np.log((xm * np.exp(xm) - np.expm1(xm)) / (xm * xm))
        xb = x[big]
        out[big] = xb + np.log(xb - 1.0 + np.exp(-xb)) - 2.0 * np.log(xb)
    return out


@dataclass(frozen=True)
class Gamma:
    shape: float
    scale: float
    kind = "gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValidationError(f"gamma needs shape>0, scale>0; got {self}")

    @property
    def sup(self) -> float:
        return 1.0 / self.scale

    def log_mgf(self, t):
        return -self.shape * np.log1p(-np.asarray(t, dtype=float) * self.scale)

    def log_dmgf(self, t):
        l1p = np.log1p(-np.asarray(t, dtype=float) * self.scale)
        return math.log(self.shape * self.scale) - (self.shape + 1.0) * l1p

    def params(self) -> dict:
        return {"shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Exponential:
    rate: float
    kind = "exp"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValidationError(f"exponential needs rate>0; got {self}")

    @property
    def sup(self) -> float:
        return self.rate

    def log_mgf(self, t):
        return -np.log1p(-np.asarray(t, dtype=float) / self.rate)

    def log_dmgf(self, t):
        return -math.log(self.rate) - 2.0 * np.log1p(-np.asarray(t, dtype=float) / self.rate)

    def params(self) -> dict:
        return {"rate": self.rate}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise ValidationError(f"uniform needs 0 <= lo < hi; got {self}")

    @property
    def sup(self) -> float:
        return math.inf

    def log_mgf(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.lo + _log_phi(t * (self.hi - self.lo))

    def log_dmgf(self, t):
        # M'(t) = e^{t lo} (lo * phi(x) + w * phi'(x)),  x = t w
        t = np.asarray(t, dtype=float)
        w = self.hi - self.lo
        x = t * w
        with np.errstate(divide="ignore"):
            log_lo = math.log(self.lo) if self.lo > 0 else -math.inf
        inner = np.logaddexp(log_lo + _log_phi(x), math.log(w) + _log_dphi(x))
        return t * self.lo + inner

    def params(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Degenerate:
    """Point mass; recovers the plain Laplace mechanism."""

    value: float
    kind = "degenerate"

    def __post_init__(self):
        if not self.value > 0:
            raise ValidationError(f"degenerate needs value>0; got {self}")

    @property
    def sup(self) -> float:
        return math.inf

    def log_mgf(self, t):
        return self.value * np.asarray(t, dtype=float)

    def log_dmgf(self, t):
        return math.log(self.value) + self.value * np.asarray(t, dtype=float)

    def params(self) -> dict:
        return {"value": self.value}


ComponentDist = Union[Gamma, Exponential, Uniform, Degenerate]

_KINDS = {"gamma": Gamma, "exp": Exponential, "uniform": Uniform, "degenerate": Degenerate}


def dist_to_dict(dist: ComponentDist) -> dict:
    return {"type": dist.kind, **dist.params()}


def dist_from_dict(d: dict) -> ComponentDist:
    d = dict(d)
    try:
        cls = _KINDS[d.pop("type")]
    except KeyError as exc:
        raise ValidationError(f"unknown distribution type in {d!r}") from exc
    return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class MixtureSpec:
    """Weighted components plus a composition mode.

    Weights are kept raw; in mixture mode they are normalized when the MGF
    is evaluated or the spec is sampled.
    """

    components: tuple
    mode: str = MIXTURE

    def __post_init__(self):
        comps = tuple((float(w), d) for w, d in self.components)
        object.__setattr__(self, "components", comps)
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 1 <= len(comps) <= MAX_COMPONENTS:
            raise ValidationError(f"need 1..{MAX_COMPONENTS} components, got {len(comps)}")
        for w, d in comps:
            if not (w > 0 and math.isfinite(w)):
                raise ValidationError(f"weights must be positive, got {w}")
            if not isinstance(d, (Gamma, Exponential, Uniform, Degenerate)):
                raise ValidationError(f"unsupported component {d!r}")

    @classmethod
    def single(cls, dist: ComponentDist) -> "MixtureSpec":
        return cls(((1.0, dist),))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def dists(self) -> tuple:
        return tuple(d for _, d in self.components)

    def normalized_weights(self) -> np.ndarray:
        w = self.weights
        return w / w.sum()

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "components": [{"weight": w, "dist": dist_to_dict(d)} for w, d in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        try:
            comps = tuple((float(c["weight"]), dist_from_dict(c["dist"])) for c in d["components"])
            return cls(comps, d.get("mode", MIXTURE))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed mixture spec: {d!r}") from exc


def domain_sup(spec: MixtureSpec) -> float:
    """Supremum of the arguments at which the MGF of ``spec`` is finite."""
    if spec.mode == MIXTURE:
        return min(d.sup for d in spec.dists)
    return min(d.sup / w for w, d in spec.components)


def _check_domain(spec: MixtureSpec, t) -> None:
    t_max = np.max(t)
    sup = domain_sup(spec)
    if t_max >= sup - DOMAIN_MARGIN:
        raise DomainError(f"MGF undefined at t={float(t_max):g} (needs t < {sup:g})")


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


def log_mgf(spec: MixtureSpec, t):
    """log M(t); accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    _check_domain(spec, t)
    return _unwrap(_log_mgf(spec, t))


def _log_mgf(spec: MixtureSpec, t: np.ndarray) -> np.ndarray:
    if spec.mode == MIXTURE:
        lw = np.log(spec.normalized_weights())
        terms = [lw[i] + d.log_mgf(t) for i, d in enumerate(spec.dists)]
        return logsumexp(np.stack(terms), axis=0)
    return sum(d.log_mgf(w * t) for w, d in spec.components)


def log_mgf_derivative(spec: MixtureSpec, t):
    t = np.asarray(t, dtype=float)
    _check_domain(spec, t)
    return _unwrap(_log_dmgf(spec, t))


def _log_dmgf(spec: MixtureSpec, t: np.ndarray) -> np.ndarray:
    if spec.mode == MIXTURE:
        lw = np.log(spec.normalized_weights())
        terms = [lw[i] + d.log_dmgf(t) for i, d in enumerate(spec.dists)]
        return logsumexp(np.stack(terms), axis=0)
    # M'(t) = M(t) * sum_i a_i M_i'(a_i t) / M_i(a_i t)
    log_ratios = [math.log(w) + d.log_dmgf(w * t) - d.log_mgf(w * t) for w, d in spec.components]
    return _log_mgf(spec, t) + logsumexp(np.stack(log_ratios), axis=0)


def mgf_component(dist: ComponentDist, t):
    """MGF of a single component."""
    t = np.asarray(t, dtype=float)
    if np.max(t) >= dist.sup - DOMAIN_MARGIN:
        raise DomainError(f"{dist.kind} MGF undefined at t={float(np.max(t)):g}")
    with np.errstate(over="ignore"):
        return _unwrap(np.exp(dist.log_mgf(t)))


def mgf(spec: MixtureSpec, t):
    """M(t) = E[exp(t Y)]; overflow gives +inf."""
    with np.errstate(over="ignore"):
        return _unwrap(np.exp(log_mgf(spec, t)))


def mgf_derivative(spec: MixtureSpec, t):
    """M'(t) = E[Y exp(t Y)] from analytic per-component derivatives."""
    with np.errstate(over="ignore"):
        return _unwrap(np.exp(log_mgf_derivative(spec, t)))


def _scalar_log_phi(x: float) -> float:
    if x == 0.0:
        return 0.0
    if x > _EXP_CUTOFF:
        return x + math.log1p(-math.exp(-x)) - math.log(x)
    return math.log(math.expm1(x) / x)


def _scalar_log_dphi(x: float) -> float:
    if abs(x) < _SERIES_CUTOFF:
        return math.log(0.5 + x / 3.0 + x * x / 8.0 + x ** 3 / 30.0)
    if x > _EXP_CUTOFF:
        return x + math.log(x - 1.0 + math.exp(-x)) - 2.0 * math.log(x)
    return math.log((x * math.exp(x) - math.expm1(x)) / (x * x))


def _scalar_log_dmgf_component(dist, t: float) -> float:
    if isinstance(dist, Uniform):
        w = dist.hi - dist.lo
        x = t * w
        b = math.log(w) + _scalar_log_dphi(x)
        if dist.lo > 0:
            a = math.log(dist.lo) + _scalar_log_phi(x)
            top = max(a, b)
            b = top + math.log1p(math.exp(-abs(a - b)))
        return t * dist.lo + b
    if isinstance(dist, Gamma):
        return math.log(dist.shape * dist.scale) - (dist.shape + 1.0) * math.log1p(-t * dist.scale)
    if isinstance(dist, Exponential):
        return -math.log(dist.rate) - 2.0 * math.log1p(-t / dist.rate)
    if isinstance(dist, Degenerate):
        return math.log(dist.value) + dist.value * t
    return float(dist.log_dmgf(t))


def _scalar_log_mgf_component(dist, t: float) -> float:
    if isinstance(dist, Uniform):
        return t * dist.lo + _scalar_log_phi(t * (dist.hi - dist.lo))
    if isinstance(dist, Gamma):
        return -dist.shape * math.log1p(-t * dist.scale)
    if isinstance(dist, Exponential):
        return -math.log1p(-t / dist.rate)
    if isinstance(dist, Degenerate):
        return dist.value * t
    return float(dist.log_mgf(t))


def log_mgf_derivative_scalar(spec: MixtureSpec, t: float) -> float:
    """Fast float-only twin of :func:`log_mgf_derivative` (no domain check)."""
    if spec.mode == MIXTURE:
        terms = [math.log(p) + _scalar_log_dmgf_component(d, t)
                 for p, d in zip(spec.normalized_weights(), spec.dists)]
    else:
        lm = sum(_scalar_log_mgf_component(d, w * t) for w, d in spec.components)
        terms = [lm + math.log(w) + _scalar_log_dmgf_component(d, w * t)
                 - _scalar_log_mgf_component(d, w * t) for w, d in spec.components]
    top = max(terms)
    if top == -math.inf:
        return top
    return top + math.log(math.fsum(math.exp(x - top) for x in terms))
