import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmodp.errors import DomainError
from lmodp.mgf import (
    LINEAR,
    Degenerate,
    Exponential,
    Gamma,
    MixtureSpec,
    Uniform,
    domain_sup,
    log_mgf,
    log_mgf_derivative_scalar,
    mgf,
    mgf_component,
    mgf_derivative,
)
from lmodp.sampler import make_rng, sample_inverse_scale


def single(d):
    return MixtureSpec.single(d)


@pytest.mark.parametrize("dist,t,expected", [
    (Gamma(1, 1), 0.5, 2.0),
    (Uniform(1, 3), 0.0, 1.0),
    (Exponential(2), 1.0, 2.0),
])
def test_component_values(dist, t, expected):
    assert mgf_component(dist, t) == pytest.approx(expected, rel=1e-14)


def test_gamma_outside_domain():
    with pytest.raises(DomainError):
        mgf_component(Gamma(2, 0.5), 2.1)


def test_mixture_examples():
    assert mgf(single(Degenerate(1)), -1.0) == pytest.approx(math.exp(-1), rel=1e-14)
    two = MixtureSpec(((0.5, Exponential(2)), (0.5, Exponential(2))))
    assert mgf(two, 1.0) == pytest.approx(2.0, rel=1e-14)
    lin = MixtureSpec(((1, Gamma(1, 1)), (1, Degenerate(1))), LINEAR)
    assert mgf(lin, 0.5) == pytest.approx(2 * math.exp(0.5), rel=1e-14)


def test_linear_against_monte_carlo():
    lin = MixtureSpec(((1, Gamma(1, 1)), (1, Degenerate(1))), LINEAR)
    y = sample_inverse_scale(lin, make_rng(3, 0), 10**6)
    v = np.exp(0.5 * y)
    # heavy right tail, so compare at 4 stderr
    assert abs(v.mean() - mgf(lin, 0.5)) < 4 * v.std() / math.sqrt(v.size)


def test_derivative_examples():
    assert mgf_derivative(single(Degenerate(1)), 0.0) == pytest.approx(1.0, rel=1e-14)
    assert mgf_derivative(single(Uniform(1, 3)), 0.0) == pytest.approx(2.0, rel=1e-12)
    assert mgf_derivative(single(Gamma(2, 0.5)), 0.5) == pytest.approx(0.75 ** -3, rel=1e-13)


def test_domain_sup():
    assert domain_sup(single(Gamma(1, 0.25))) == 4.0
    assert domain_sup(single(Uniform(0, 1))) == math.inf
    assert domain_sup(MixtureSpec(((2, Exponential(3)),), LINEAR)) == 1.5


def test_rejects_bad_parameters():
    for bad in (lambda: Gamma(0, 1), lambda: Exponential(-1), lambda: Uniform(2, 1),
                lambda: Degenerate(0)):
        with pytest.raises(ValueError):
            bad()


def test_json_round_trip():
    s = MixtureSpec(((0.2, Gamma(2, 0.1)), (0.3, Exponential(5)), (0.5, Uniform(0.1, 1))))
    assert MixtureSpec.from_dict(s.to_dict()) == s


dists = st.one_of(
    st.builds(Gamma, st.floats(0.3, 20), st.floats(1e-3, 0.5)),
    st.builds(Exponential, st.floats(2.5, 200)),
    st.builds(lambda lo, w: Uniform(lo, lo + w), st.floats(0.0, 5), st.floats(0.01, 5)),
    st.builds(Degenerate, st.floats(0.01, 5)),
)
specs = st.builds(
    lambda comps, mode: MixtureSpec(tuple(comps), mode),
    st.lists(st.tuples(st.floats(0.05, 1.0), dists), min_size=1, max_size=3),
    st.sampled_from(["mixture", LINEAR]),
)


@settings(max_examples=150, deadline=None)
@given(specs, st.floats(-3, 0.6))
def test_derivative_matches_finite_difference(spec, t):
    if t + 1e-4 >= domain_sup(spec) * 0.9:
        return
    h = 1e-5
    fd = (mgf(spec, t + h) - mgf(spec, t - h)) / (2 * h)
    assert mgf_derivative(spec, t) == pytest.approx(fd, rel=1e-5, abs=1e-10)


@settings(max_examples=150, deadline=None)
@given(specs, st.floats(-50, 2))
def test_log_paths_agree(spec, t):
    if t >= domain_sup(spec) * 0.9:
        return
    assert math.log(mgf(spec, t)) == pytest.approx(log_mgf(spec, t), rel=1e-10, abs=1e-12)
    if spec.mode == "mixture":
        ref = math.log(mgf_derivative(spec, t))
        assert log_mgf_derivative_scalar(spec, t) == pytest.approx(ref, rel=1e-10, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(specs)
def test_mgf_is_one_at_zero_and_increasing(spec):
    assert mgf(spec, 0.0) == pytest.approx(1.0, rel=1e-12)
    assert mgf(spec, -1.0) < mgf(spec, -0.5) < 1.0
