"""Noise comparison, ablation and search-space quantification harnesses.

Also hosts the numeric Renyi-divergence oracles that the closed-form
accountant is checked against.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, stats
from scipy.optimize import least_squares

from .accountant import PrivacyBudget, calibrate_gaussian
from .errors import EmptyInput, InvalidQuantization, QuadratureNonConvergence, ValidationError
from .mgf import (
    LINEAR,
    Degenerate,
    Exponential,
    Gamma,
    MixtureSpec,
    Uniform,
    log_mgf_derivative,
    log_mgf_derivative_scalar,
)
from .sampler import make_rng, sample_gaussian_noise, sample_lmo_noise
from .search import PER_STEP, SearchGrid, default_grid, search_optimal, with_budget

ENTROPY_BINS = 1024
QUAD_RTOL = 1e-11


# ---------------------------------------------------------------------------
# numeric Renyi divergence


def noise_log_density(spec: MixtureSpec, x):
    """log of p(x) = M'(-|x|) / 2, the marginal density of the two-fold noise."""
    return math.log(0.5) + log_mgf_derivative(spec, -np.abs(np.asarray(x, dtype=float)))


def _quad(f, a, b, points=None):
    kw = dict(epsabs=0.0, epsrel=QUAD_RTOL, limit=500)
    if points is not None and math.isfinite(a) and math.isfinite(b):
        kw["points"] = points
    with np.errstate(over="ignore", under="ignore"):
        val, err = integrate.quad(f, a, b, full_output=1, **kw)[:2]
    if not math.isfinite(val) or err > 1e-7 * max(abs(val), 1e-300):
        raise QuadratureNonConvergence(f"quadrature on [{a}, {b}] did not converge (err={err:g})")
    return val


def _laplace_pair_integral(log_p, C, alpha, shift=0.0):
    """int p(x)^alpha p(x - C)^(1 - alpha) dx, scaled by exp(-shift)."""

    def f(x):
        return math.exp(alpha * log_p(x) + (1.0 - alpha) * log_p(x - C) - shift)

    lo, hi = min(0.0, C), max(0.0, C)
    total = _quad(f, -math.inf, lo) + _quad(f, hi, math.inf)
    if hi > lo:
        total += _quad(f, lo, hi)
    return total


def renyi_divergence_numeric(spec: MixtureSpec, C: float, alpha: float,
                             conditional: bool = False) -> float:
    """D_alpha(noise || noise + C) by adaptive quadrature.

    With ``conditional=False`` this is the divergence of the marginal noise
    density.  With ``conditional=True`` the scale draw is treated as shared
    by both neighbours, i.e. E_Y[ int p_Y^a q_Y^(1-a) ] with both the inner
    integral over x and the outer expectation over Y done numerically.
    """
    if not alpha > 1:
        raise ValidationError(f"order must exceed 1, got {alpha}")
    if C == 0:
        return 0.0
    if conditional:
        integral = _conditional_integral(spec, C, alpha)
    else:
        log_half = math.log(0.5)
        integral = _laplace_pair_integral(
            lambda x: log_half + log_mgf_derivative_scalar(spec, -abs(x)), C, alpha)
    return max(math.log(integral) / (alpha - 1.0), 0.0)


def _fixed_scale_log_integral(y, C, alpha):
    log_p = lambda x: math.log(0.5 * y) - y * abs(x)  # noqa: E731
    # peak of the integrand sits at x = 0
    shift = math.log(0.5 * y) + y * (alpha - 1.0) * abs(C)
    return shift + math.log(_laplace_pair_integral(log_p, C, alpha, shift))


def _component_expectation(dist, log_g):
    """E[exp(log_g(Y))] for a single component."""
    if isinstance(dist, Degenerate):
        return math.exp(log_g(dist.value))
    if isinstance(dist, Uniform):
        return _quad(lambda y: math.exp(log_g(y)), dist.lo, dist.hi) / (dist.hi - dist.lo)
    if isinstance(dist, Gamma):
        logpdf = stats.gamma(dist.shape, scale=dist.scale).logpdf
    elif isinstance(dist, Exponential):
        logpdf = stats.expon(scale=1.0 / dist.rate).logpdf
    else:
        raise TypeError(dist)

    def f(y):
        lp = float(logpdf(y))
        return 0.0 if lp == -math.inf else math.exp(log_g(y) + lp)

    return _quad(f, 0.0, math.inf)


def _conditional_integral(spec, C, alpha):
    if spec.mode == LINEAR and len(spec.components) > 1:
        raise NotImplementedError("conditional oracle needs the law of a single draw")
    g = lambda y: _fixed_scale_log_integral(y, C, alpha) if y > 0 else 0.0  # noqa: E731
    if spec.mode == LINEAR:
        w, d = spec.components[0]
        return _component_expectation(d, lambda y: g(w * y))
    return sum(p * _component_expectation(d, g)
               for p, d in zip(spec.normalized_weights(), spec.dists))


# ---------------------------------------------------------------------------
# histogram metrics


def kl_divergence(p, q, floor: float = 1e-12) -> float:
    """KL(p || q) for discrete distributions; q is floored to stay finite."""
    p = np.asarray(p, dtype=float)
    q = np.maximum(np.asarray(q, dtype=float), floor)
    nz = p > 0
    return float(max(np.sum(p[nz] * np.log(p[nz] / q[nz])), 0.0))


def l2_distance(p, q) -> float:
    return float(np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)))


def histogram_emd(p, q, bin_width: float = 1.0) -> float:
    """1-D earth mover's distance between two histograms on shared bins."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(bin_width * np.abs(np.cumsum(p - q)).sum())


def emd(u_values, v_values) -> float:
    """1-Wasserstein distance between two empirical value distributions."""
    return float(stats.wasserstein_distance(u_values, v_values))


METRICS = {"kl": kl_divergence, "l2": l2_distance, "emd": emd}


def common_edges(a, b, bins: int = ENTROPY_BINS) -> np.ndarray:
    """Equal-width edges over the pooled 0.1-99.9 percentile range."""
    pooled = np.concatenate([np.ravel(a), np.ravel(b)])
    lo, hi = np.percentile(pooled, [0.1, 99.9])
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def empirical_entropy(samples, bins=ENTROPY_BINS) -> float:
    """Shannon entropy (nats) of the normalised histogram of ``samples``.

    ``bins`` is a count or an explicit edge array.
    """
    x = np.ravel(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise EmptyInput("entropy of an empty sample")
    if np.ndim(bins) == 0:
        if bins < 2:
            raise ValidationError("need at least two bins")
        if x.min() == x.max():
            return 0.0
    counts, _ = np.histogram(x, bins=bins)
    total = counts.sum()
    if total == 0:
        raise EmptyInput("no samples fall inside the bin range")
    p = counts[counts > 0] / total
    return float(max(-np.sum(p * np.log(p)), 0.0))


# ---------------------------------------------------------------------------
# LMO vs Gaussian


@dataclass(frozen=True)
class ComparisonRow:
    eps: float
    delta: float
    lmo_spec: MixtureSpec
    gaussian_sigma: float
    mean_abs_lmo: float
    mean_abs_gauss: float
    reduction_rate: float
    entropy_lmo: float
    entropy_gauss: float
    var_lmo: float
    var_gauss: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    n: int
    seed: int

    COLUMNS = ("eps", "delta", "gaussian_sigma", "mean_abs_lmo", "mean_abs_gauss",
               "reduction_rate", "entropy_lmo", "entropy_gauss", "var_lmo", "var_gauss",
               "lmo_spec")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            d = asdict(r)
            d["lmo_spec"] = _spec_label(r.lmo_spec)
            w.writerow([_fmt(d[c]) for c in self.COLUMNS])
        return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _spec_label(spec: MixtureSpec) -> str:
    parts = []
    for w, d in spec.components:
        args = ",".join(f"{k}={v:g}" for k, v in d.params().items())
        parts.append(f"{w:g}*{d.kind}({args})")
    return f"{spec.mode}:" + "+".join(parts)


def sample_stats(lmo, gauss, bins: int = ENTROPY_BINS) -> dict:
    edges = common_edges(lmo, gauss, bins)
    m_l, m_g = float(np.mean(np.abs(lmo))), float(np.mean(np.abs(gauss)))
    return {
        "mean_abs_lmo": m_l,
        "mean_abs_gauss": m_g,
        "reduction_rate": 1.0 - m_l / m_g,
        "entropy_lmo": empirical_entropy(lmo, edges),
        "entropy_gauss": empirical_entropy(gauss, edges),
        "var_lmo": float(np.var(lmo)),
        "var_gauss": float(np.var(gauss)),
    }


def compare_noises(eps_list, delta: float = 1e-10, C: float = 1.0,
                   grid: SearchGrid | None = None, n: int = 1_000_000,
                   seed: int = 42, workers: int = 1) -> ComparisonReport:
    """Searched LMO noise vs calibrated Gaussian noise at each per-step eps."""
    if n < 100_000:
        raise ValidationError("comparison needs n >= 1e5 samples")
    rows = []
    for i, eps in enumerate(eps_list):
        budget = PrivacyBudget(float(eps), delta)
        g = default_grid(budget, sensitivity=C) if grid is None else with_budget(
            grid, float(eps), delta, budget_scope=PER_STEP, steps=1, sensitivity=C)
        result = search_optimal(g, seed=seed, workers=workers)
        sigma = calibrate_gaussian(budget, C, 1, g.orders)
        lmo = sample_lmo_noise(result.spec, n, make_rng(seed, 2 * i))
        # calibrate_gaussian returns the absolute std; the sampler takes a multiplier of C
        gauss = sample_gaussian_noise(sigma / C, C, n, make_rng(seed, 2 * i + 1))
        rows.append(ComparisonRow(eps=float(eps), delta=delta, lmo_spec=result.spec,
                                  gaussian_sigma=sigma, **sample_stats(lmo, gauss)))
    return ComparisonReport(tuple(rows), n, seed)


# ---------------------------------------------------------------------------
# ablation


@dataclass(frozen=True)
class AblationRow:
    eps: float
    variant: str
    full_spec: MixtureSpec
    variant_spec: MixtureSpec
    mean_abs_full: float
    mean_abs_variant: float

    @property
    def gap(self) -> float:
        """Relative amount by which the variant's noise exceeds the full mixture's."""
        return self.mean_abs_variant / self.mean_abs_full - 1.0


@dataclass(frozen=True)
class AblationReport:
    rows: tuple
    n: int
    seed: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "variant", "mean_abs_full", "mean_abs_variant", "gap",
                    "full_spec", "variant_spec"])
        for r in self.rows:
            w.writerow([repr(r.eps), r.variant, repr(r.mean_abs_full), repr(r.mean_abs_variant),
                        repr(r.gap), _spec_label(r.full_spec), _spec_label(r.variant_spec)])
        return buf.getvalue()


def variant_grid(variant: tuple, budget: PrivacyBudget, **overrides) -> SearchGrid:
    """Grid restricted to the ``variant`` components, each with a usable range."""
    base = default_grid(budget, components=tuple(variant), **overrides)
    if "gamma" in variant:
        base = replace(base, gamma_shapes=(1.0, 2.0, 5.0, 10.0, 20.0),
                       gamma_scales=tuple(float(s) for s in np.geomspace(1e-3, 2.0, 40))
                       if len(variant) == 1 else base.gamma_scales)
    if "exp" in variant and len(variant) == 1:
        base = replace(base, exp_rates=tuple(float(r) for r in np.geomspace(0.05, 1e3, 80)))
    return base


def ablation_compare(variant: tuple, eps_list, delta: float = 1e-10, C: float = 1.0,
                     n: int = 1_000_000, seed: int = 42,
                     full_grid: SearchGrid | None = None) -> AblationReport:
    """Searched full-mixture noise vs noise searched over a restricted family."""
    rows = []
    for i, eps in enumerate(eps_list):
        budget = PrivacyBudget(float(eps), delta)
        full = default_grid(budget, sensitivity=C) if full_grid is None else with_budget(
            full_grid, float(eps), delta)
        if set(variant) == set(full.components):
            var = full
        else:
            var = variant_grid(variant, budget, sensitivity=C)
        spec_full = search_optimal(full, seed=seed).spec
        spec_var = search_optimal(var, seed=seed).spec
        # common random numbers: same stream for both draws
        a = sample_lmo_noise(spec_full, n, make_rng(seed, 2 * i))
        b = sample_lmo_noise(spec_var, n, make_rng(seed, 2 * i))
        rows.append(AblationRow(float(eps), "+".join(variant), spec_full, spec_var,
                                float(np.mean(np.abs(a))), float(np.mean(np.abs(b)))))
    return AblationReport(tuple(rows), n, seed)


# ---------------------------------------------------------------------------
# search-space quantification


@dataclass(frozen=True)
class QuantifyCell:
    q: float
    k: int
    mu_sim: float
    sigma_sim: float
    distances: dict
    repaired: dict


@dataclass(frozen=True)
class QuantifyReport:
    cells: tuple
    M: int
    seed: int
    metrics: tuple = field(default=("kl", "l2", "emd"))

    def table(self, metric: str) -> dict:
        return {(c.q, c.k): c.distances[metric] for c in self.cells}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["q", "k", "M", "mu_sim", "sigma_sim"]
        head += list(self.metrics) + [f"{m}_repaired" for m in self.metrics]
        w.writerow(head)
        for c in self.cells:
            row = [repr(c.q), c.k, self.M, repr(c.mu_sim), repr(c.sigma_sim)]
            row += [repr(c.distances[m]) for m in self.metrics]
            row += [repr(c.repaired[m]) for m in self.metrics]
            w.writerow(row)
        return buf.getvalue()


def match_moments(z: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """Shift and scale ``z`` so that its non-negative part has mean mu, std sigma."""
    if sigma == 0 or np.std(z) == 0:
        return np.full_like(z, mu)

    def resid(p):
        y = np.maximum(p[0] + math.exp(p[1]) * z, 0.0)
        return [(y.mean() - mu) / sigma, (y.std() - sigma) / sigma]

    sol = least_squares(resid, [mu, math.log(sigma)], xtol=1e-12, ftol=1e-12, gtol=1e-12)
    return np.maximum(sol.x[0] + math.exp(sol.x[1]) * z, 0.0)


def _check_quantization(q: float) -> int:
    if not 0 < q <= 1:
        raise InvalidQuantization(f"quantization rate must lie in (0, 1], got {q}")
    N = round(1.0 / q)
    if abs(N - 1.0 / q) > 1e-9 * N:
        raise InvalidQuantization(f"1/q must be an integer, got 1/{q} = {1.0 / q}")
    return int(N)


def quantify_space(Q, K, M: int = 100, grid: SearchGrid | None = None,
                   metrics=("kl", "l2", "emd"), seed: int = 42,
                   repairings: int = 32) -> QuantifyReport:
    """Distance between multinomial-simulated PDFs and moment-matched LMO PDFs.

    For each (q, k): M normalised Multinomial(1/q, k, 1/k) histograms are
    drawn; each LMO counterpart is k noise draws from a random grid
    candidate, moment matched to the simulated cell statistics and
    renormalised.  Draws are paired by index; the mean over random
    re-pairings is reported alongside.
    """
    for m in metrics:
        if m not in METRICS:
            raise ValidationError(f"unknown metric {m!r}")
    grid = default_grid(PrivacyBudget(1.0, 1e-10)) if grid is None else grid
    n_cand = grid.size()
    cells = []
    for qi, q in enumerate(Q):
        N = _check_quantization(q)
        for ki, k in enumerate(K):
            k = int(k)
            if k < 2:
                raise ValidationError("domain size k must be >= 2")
            rng = make_rng(seed, 1000 * qi + ki)
            x = rng.multinomial(N, np.full(k, 1.0 / k), size=M) / N
            mu, sd = float(x.mean()), float(x.std())
            y = np.empty_like(x)
            for j in range(M):
                spec = grid.candidate(int(rng.integers(n_cand)))
                w = sample_lmo_noise(spec, k, rng)
                z = (w - w.mean()) / w.std() if w.std() > 0 else np.zeros(k)
                yj = match_moments(z, mu, sd)
                s = yj.sum()
                y[j] = yj / s if s > 0 else np.full(k, 1.0 / k)
            dist = {m: float(np.mean([METRICS[m](x[i], y[i]) for i in range(M)]))
                    for m in metrics}
            perms = [rng.permutation(M) for _ in range(repairings)]
            rep = {m: float(np.mean([[METRICS[m](x[i], y[p[i]]) for i in range(M)]
                                     for p in perms])) for m in metrics}
            cells.append(QuantifyCell(float(q), k, mu, sd, dist, rep))
    return QuantifyReport(tuple(cells), M, seed, tuple(metrics))
