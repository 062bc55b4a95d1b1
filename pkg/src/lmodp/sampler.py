"""Two-fold LMO noise and Gaussian baseline samplers.

Randomness comes from a counter-based Philox generator keyed by
``(seed, stream)``, so callers working on disjoint streams never share
state and results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mgf import LINEAR, Degenerate, Exponential, Gamma, MixtureSpec, Uniform

_U64 = (1 << 64) - 1


def make_rng(seed: int = 42, stream: int = 0) -> np.random.Generator:
    """Independent generator for the (seed, stream) pair."""
    key = (int(seed) & _U64) | ((int(stream) & _U64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform on the open interval (0, 1)."""
    return (rng.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) / float(1 << 53)


@dataclass(frozen=True)
class GaussianParams:
    sigma: float
    sensitivity: float = 1.0


@dataclass(frozen=True)
class NoiseRequest:
    noise: object  # MixtureSpec | GaussianParams
    dim: int
    seed: int = 42
    stream: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")


def sample_gamma(shape: float, scale: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Marsaglia-Tsang squeeze/rejection; shape < 1 is boosted by U^(1/shape)."""
    boost = shape < 1.0
    k = shape + 1.0 if boost else shape
    d = k - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(16, int(1.1 * (size - filled)) + 16)
        x = rng.standard_normal(m)
        v = (1.0 + c * x) ** 3
        u = _open_uniform(rng, m)
        pos = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            squeeze = u < 1.0 - 0.0331 * x ** 4
            full = np.log(u) < 0.5 * x * x + d * (1.0 - v + np.log(v))
        accept = pos & (squeeze | full)
        got = (d * v)[accept][: size - filled]
        out[filled:filled + got.size] = got
        filled += got.size
    if boost:
        out *= _open_uniform(rng, size) ** (1.0 / shape)
    return out * scale


def _sample_component(dist, size: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dist, Gamma):
        return sample_gamma(dist.shape, dist.scale, size, rng)
    if isinstance(dist, Exponential):
        return -np.log(_open_uniform(rng, size)) / dist.rate
    if isinstance(dist, Uniform):
        return dist.lo + (dist.hi - dist.lo) * _open_uniform(rng, size)
    if isinstance(dist, Degenerate):
        return np.full(size, dist.value)
    raise TypeError(f"cannot sample {dist!r}")


def sample_inverse_scale(spec: MixtureSpec, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Draws of Y = 1/b for the second fold."""
    if spec.mode == LINEAR:
        total = np.zeros(size)
        for w, d in spec.components:
            total += w * _sample_component(d, size, rng)
        return total
    probs = spec.normalized_weights()
    if len(probs) == 1:
        return _sample_component(spec.dists[0], size, rng)
    which = np.searchsorted(np.cumsum(probs), _open_uniform(rng, size), side="right")
    which = np.minimum(which, len(probs) - 1)
    out = np.empty(size)
    for i, d in enumerate(spec.dists):
        sel = which == i
        out[sel] = _sample_component(d, int(sel.sum()), rng)
    return out


def sample_laplace(scale, rng: np.random.Generator, size: int) -> np.ndarray:
    u = _open_uniform(rng, size) - 0.5
    return -np.sign(u) * scale * np.log1p(-2.0 * np.abs(u))


def sample_lmo_noise(spec: MixtureSpec, d: int, rng: np.random.Generator) -> np.ndarray:
    """d i.i.d. coordinates, each Laplace with its own scale 1/Y."""
    y = sample_inverse_scale(spec, rng, d)
    return sample_laplace(1.0 / y, rng, d)


def sample_gaussian_noise(sigma: float, C: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """N(0, C^2 sigma^2) per coordinate."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return C * sigma * rng.standard_normal(d)


def sample(request: NoiseRequest) -> np.ndarray:
    rng = make_rng(request.seed, request.stream)
    if isinstance(request.noise, GaussianParams):
        return sample_gaussian_noise(request.noise.sigma, request.noise.sensitivity,
                                     request.dim, rng)
    return sample_lmo_noise(request.noise, request.dim, rng)
