import math

import numpy as np
import pytest
from scipy import stats

from lmodp.mgf import Degenerate, Exponential, Gamma, LINEAR, MixtureSpec, Uniform, mgf
from lmodp.sampler import (
    GaussianParams,
    NoiseRequest,
    make_rng,
    sample,
    sample_gamma,
    sample_gaussian_noise,
    sample_inverse_scale,
    sample_lmo_noise,
)
from lmodp.search import mechanism_cdf, usefulness


def within(values, target, k=3.0):
    return abs(values.mean() - target) <= k * values.std(ddof=1) / math.sqrt(values.size)


def test_degenerate_inverse_scale():
    y = sample_inverse_scale(MixtureSpec.single(Degenerate(2.0)), make_rng(), 1000)
    assert np.all(y == 2.0)


def test_uniform_mean():
    y = sample_inverse_scale(MixtureSpec.single(Uniform(1, 3)), make_rng(), 10**6)
    assert within(y, 2.0)


def test_mixture_mgf_monte_carlo():
    spec = MixtureSpec(((0.3, Exponential(1)), (0.7, Gamma(2, 1))))
    y = sample_inverse_scale(spec, make_rng(5), 10**6)
    assert within(np.exp(0.1 * y), mgf(spec, 0.1))


def test_linear_mode_mean():
    spec = MixtureSpec(((0.5, Gamma(3, 0.2)), (2.0, Uniform(0.1, 0.3))), LINEAR)
    y = sample_inverse_scale(spec, make_rng(6), 10**6)
    assert within(y, 0.5 * 0.6 + 2.0 * 0.2)


@pytest.mark.parametrize("shape,scale", [(0.3, 2.0), (1.0, 1.0), (2.5, 0.1), (50.0, 1e-3)])
def test_gamma_sampler_ks(shape, scale):
    x = sample_gamma(shape, scale, 100_000, make_rng(11))
    assert stats.kstest(x, stats.gamma(shape, scale=scale).cdf).pvalue > 1e-3


def test_laplace_tail_and_symmetry():
    w = sample_lmo_noise(MixtureSpec.single(Degenerate(1.0)), 10**6, make_rng(8))
    inside = (np.abs(w) <= math.log(2)).astype(float)
    assert within(inside, 0.5)
    # median of Laplace(1): stderr = 1 / (2 f(0) sqrt(n)) = 1/sqrt(n)
    assert abs(np.median(w)) < 3 / math.sqrt(w.size)


@pytest.mark.parametrize("spec", [
    MixtureSpec(((0.5, Gamma(2, 0.1)), (0.5, Uniform(0.1, 1)))),
    MixtureSpec(((0.2, Exponential(3)), (0.8, Degenerate(0.5)))),
    MixtureSpec(((0.3, Gamma(5, 0.01)), (0.3, Exponential(200)), (0.4, Uniform(0.5, 0.6))),
                LINEAR),
])
def test_noise_matches_analytic_cdf(spec):
    w = sample_lmo_noise(spec, 100_000, make_rng(13, 2))
    assert stats.kstest(w, lambda x: mechanism_cdf(spec, 0.0, x)).pvalue > 1e-3
    hits = (np.abs(w) <= 1.0).astype(float)
    assert within(hits, usefulness(spec, 1.0))


def test_gaussian_noise():
    w = sample_gaussian_noise(1.0, 1.0, 10**6, make_rng(1))
    assert abs(w.var() - 1.0) < 0.01
    w = sample_gaussian_noise(2.0, 3.0, 10**6, make_rng(1))
    assert w.std() == pytest.approx(6.0, rel=0.01)
    with pytest.raises(ValueError):
        sample_gaussian_noise(0.0, 1.0, 3, make_rng())


def test_determinism_and_streams():
    spec = MixtureSpec(((0.5, Gamma(2, 0.1)), (0.5, Uniform(0.1, 1))))
    a = sample(NoiseRequest(spec, 1000, seed=3, stream=4))
    b = sample(NoiseRequest(spec, 1000, seed=3, stream=4))
    c = sample(NoiseRequest(spec, 1000, seed=3, stream=5))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    g = sample(NoiseRequest(GaussianParams(2.0), 10, seed=1))
    assert g.tobytes() == sample(NoiseRequest(GaussianParams(2.0), 10, seed=1)).tobytes()
    with pytest.raises(ValueError):
        NoiseRequest(spec, 0)
