"""Renyi-DP curves for LMO and Gaussian noise, composition and conversion.

Curves are evaluated on a fixed integer order grid.  An order at which the
MGF does not exist gets ``+inf`` instead of raising, so composition and
conversion simply skip it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import AllInfinite, GridMismatch, InvalidOrder, Unachievable, ValidationError
from .mgf import DOMAIN_MARGIN, MixtureSpec, _log_mgf, domain_sup

DEFAULT_ALPHA_MAX = 128


def default_orders(alpha_max: int = DEFAULT_ALPHA_MAX) -> tuple:
    if alpha_max < 2:
        raise InvalidOrder(f"alpha_max must be >= 2, got {alpha_max}")
    return tuple(float(a) for a in range(2, int(alpha_max) + 1))


@dataclass(frozen=True)
class PrivacyBudget:
    eps: float
    delta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if not 0 < self.delta < 1:
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class RdpCurve:
    orders: tuple
    eps: tuple

    def __post_init__(self):
        orders = tuple(float(a) for a in self.orders)
        eps = tuple(float(e) for e in self.eps)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "eps", eps)
        if len(orders) != len(eps) or not orders:
            raise ValidationError("orders and eps must be non-empty and of equal length")
        if orders[0] <= 1 or any(b <= a for a, b in zip(orders, orders[1:])):
            raise ValidationError("orders must be > 1 and strictly increasing")
        if any(e < 0 or math.isnan(e) for e in eps):
            raise ValidationError("eps values must be non-negative")

    @classmethod
    def zeros(cls, orders: Sequence[float]) -> "RdpCurve":
        return cls(tuple(orders), (0.0,) * len(orders))

    def as_arrays(self):
        return np.array(self.orders), np.array(self.eps)

    def scaled(self, factor: float) -> "RdpCurve":
        return RdpCurve(self.orders, tuple(factor * e for e in self.eps))

    def to_dict(self) -> dict:
        return {
            "orders": list(self.orders),
            "eps": [e if math.isfinite(e) else "inf" for e in self.eps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RdpCurve":
        return cls(tuple(d["orders"]), tuple(math.inf if e == "inf" else e for e in d["eps"]))


def _check_order(alpha: float) -> None:
    if not alpha > 1:
        raise InvalidOrder(f"Renyi order must exceed 1, got {alpha}")


def _lmo_rdp_array(spec: MixtureSpec, C: float, alphas: np.ndarray) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    out = np.full(alphas.shape, math.inf)
    ok = C * (alphas - 1.0) < domain_sup(spec) - DOMAIN_MARGIN
    if not ok.any():
        return out
    a = alphas[ok]
    logs = np.stack([_log_mgf(spec, C * (a - 1)), _log_mgf(spec, -C * a)])
    coeffs = np.stack([a / (2 * a - 1), (a - 1) / (2 * a - 1)])
    with np.errstate(invalid="ignore"):
        val = _log_unit_combination(logs, coeffs) / (a - 1)
    out[ok] = np.where(np.isnan(val), math.inf, np.maximum(val, 0.0))
    return out


def _log_unit_combination(logs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """log(sum_i c_i exp(L_i)) along axis 0 for coefficients summing to one.

    Near zero the sum is formed as 1 + sum_i c_i expm1(L_i) so small RDP
    values keep full relative precision.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        direct = logsumexp(logs, b=coeffs, axis=0)
        small = np.log1p(np.sum(coeffs * np.expm1(np.minimum(logs, 1.0)), axis=0))
    return np.where(np.max(logs, axis=0) <= 1.0, small, direct)


def lmo_rdp(spec: MixtureSpec, C: float, alpha: float) -> float:
    """RDP of Laplace noise whose inverse scale is drawn from ``spec``.

    eps_alpha = log[ a/(2a-1) M(C(a-1)) + (a-1)/(2a-1) M(-C a) ] / (a-1).
    Returns +inf when ``C (alpha-1)`` is outside the MGF domain.
    """
    _check_order(alpha)
    if C < 0:
        raise ValidationError(f"sensitivity must be non-negative, got {C}")
    return float(_lmo_rdp_array(spec, C, np.array([alpha]))[0])


def lmo_rdp_paper_form(spec: MixtureSpec, C: float, alpha: float) -> float:
    """Three-term form with MGF arguments a-1, 1-C-a and (1-2C)a+C-1.

    Only agrees with :func:`lmo_rdp` at ``C == 1``; kept for comparison.
    Returns nan if the bracket is not positive.
    """
    _check_order(alpha)
    a = float(alpha)
    args = np.array([a - 1.0, 1.0 - C - a, (1.0 - 2.0 * C) * a + (C - 1.0)])
    if args.max() >= domain_sup(spec) - DOMAIN_MARGIN:
        return math.inf
    coeffs = np.array([a / (2 * a - 1), 0.5, 1.0 / (2.0 * (1.0 - 2.0 * a))])
    logs = _log_mgf(spec, args)
    _, sign = logsumexp(logs, b=coeffs, return_sign=True)
    if sign <= 0:
        return math.nan
    return float(_log_unit_combination(logs[:, None], coeffs[:, None])[0] / (a - 1))


def lmo_curve(spec: MixtureSpec, C: float, orders: Sequence[float] | None = None) -> RdpCurve:
    orders = default_orders() if orders is None else tuple(orders)
    return RdpCurve(orders, tuple(_lmo_rdp_array(spec, C, np.array(orders))))


def gaussian_rdp(sigma: float, C: float, alpha: float) -> float:
    """alpha C^2 / (2 sigma^2) for N(0, sigma^2) noise on a sensitivity-C query."""
    _check_order(alpha)
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    return alpha * C * C / (2.0 * sigma * sigma)


def gaussian_curve(sigma: float, C: float, orders: Sequence[float] | None = None) -> RdpCurve:
    orders = default_orders() if orders is None else tuple(orders)
    return RdpCurve(orders, tuple(gaussian_rdp(sigma, C, a) for a in orders))


def compose(curves: Iterable[RdpCurve]) -> RdpCurve:
    """Pointwise sum of per-step curves over a shared order grid."""
    curves = list(curves)
    if not curves:
        raise ValidationError("compose needs at least one curve")
    orders = curves[0].orders
    total = np.zeros(len(orders))
    for c in curves:
        if c.orders != orders:
            raise GridMismatch("curves are defined on different order grids")
        total = total + np.array(c.eps)
    return RdpCurve(orders, tuple(total))


def _converted(curve: RdpCurve, delta: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < delta < 1:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    orders, eps = curve.as_arrays()
    finite = np.isfinite(eps)
    if not finite.any():
        raise AllInfinite("no finite order on the curve")
    conv = eps[finite] + math.log(1.0 / delta) / (orders[finite] - 1.0)
    return orders[finite], conv


def to_dp(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """eps = min_alpha eps_alpha + log(1/delta)/(alpha-1); smallest alpha wins ties."""
    orders, conv = _converted(curve, delta)
    i = int(np.argmin(conv))
    return float(conv[i]), float(orders[i])


def to_dp_max(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """Worst converted value over the finite orders (a stricter acceptance test)."""
    orders, conv = _converted(curve, delta)
    i = int(np.argmax(conv))
    return float(conv[i]), float(orders[i])


def _gaussian_total(sigma, C, steps, orders, delta):
    return to_dp(gaussian_curve(sigma, C, orders).scaled(steps), delta)[0]


def calibrate_gaussian(
    budget: PrivacyBudget,
    C: float = 1.0,
    steps: int = 1,
    orders: Sequence[float] | None = None,
    sigma_cap: float = 1e6,
    rtol: float = 1e-6,
) -> float:
    """Smallest sigma (to relative width ``rtol``) meeting ``budget`` after ``steps`` steps."""
    orders = default_orders() if orders is None else tuple(orders)
    lo, hi = 1e-3, 1.0
    while _gaussian_total(hi, C, steps, orders, budget.delta) > budget.eps:
        lo, hi = hi, hi * 2.0
        if hi > sigma_cap:
            raise Unachievable(f"sigma above cap {sigma_cap:g} still misses the budget")
    while _gaussian_total(lo, C, steps, orders, budget.delta) <= budget.eps:
        lo /= 2.0
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if _gaussian_total(mid, C, steps, orders, budget.delta) <= budget.eps:
            hi = mid
        else:
            lo = mid
    return hi


def poisson_amplified_rdp(base: RdpCurve, q: float, alpha: int) -> float:
    """Upper bound on the RDP of ``base`` under Poisson subsampling at rate q.

    Integer orders only.  The j = 2 term uses min(4(e^eps2 - 1), 2 e^eps2),
    terms j >= 3 use 2 e^{(j-1) eps_j}.
    """
    if not 0 < q <= 1:
        raise ValidationError(f"sampling rate must lie in (0, 1], got {q}")
    alpha = int(alpha)
    if alpha < 2:
        raise InvalidOrder(f"amplification needs an integer order >= 2, got {alpha}")
    lookup = dict(zip(base.orders, base.eps))
    try:
        eps_j = np.array([lookup[float(j)] for j in range(2, alpha + 1)])
    except KeyError as exc:
        raise GridMismatch(f"base curve lacks integer order {exc.args[0]}") from exc
    if not np.all(np.isfinite(eps_j)):
        return math.inf
    j = np.arange(2, alpha + 1, dtype=float)
    log_binom = gammaln(alpha + 1) - gammaln(j + 1) - gammaln(alpha - j + 1)
    log_prob = log_binom + j * math.log(q) + xlogy(alpha - j, 1.0 - q)
    e2 = eps_j[0]
    with np.errstate(divide="ignore"):
        log_w2 = min(math.log(4.0) + math.log(math.expm1(e2)) if e2 > 0 else -math.inf,
                     math.log(2.0) + e2)
    log_w = np.concatenate([[log_w2], math.log(2.0) + (j[1:] - 1.0) * eps_j[1:]])
    total = logsumexp(np.concatenate([[0.0], log_prob + log_w]))
    return float(max(total, 0.0) / (alpha - 1))


def amplified_curve(base: RdpCurve, q: float) -> RdpCurve:
    """Apply :func:`poisson_amplified_rdp` at every (integer) order of ``base``."""
    if any(a != int(a) for a in base.orders):
        raise GridMismatch("amplification requires an integer order grid")
    return RdpCurve(base.orders, tuple(poisson_amplified_rdp(base, q, int(a)) for a in base.orders))
