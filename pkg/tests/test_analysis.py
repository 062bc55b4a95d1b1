import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from lmodp.accountant import PrivacyBudget, lmo_rdp
from lmodp.analysis import (
    METRICS,
    ablation_compare,
    common_edges,
    compare_noises,
    empirical_entropy,
    histogram_emd,
    kl_divergence,
    l2_distance,
    match_moments,
    quantify_space,
    renyi_divergence_numeric,
    sample_stats,
)
from lmodp.errors import EmptyInput, InvalidQuantization, ValidationError
from lmodp.mgf import Degenerate, Exponential, Gamma, MixtureSpec, Uniform
from lmodp.sampler import make_rng, sample_gaussian_noise
from lmodp.search import SearchGrid

DEG1 = MixtureSpec.single(Degenerate(1.0))
MIX = MixtureSpec(((0.5, Gamma(2, 0.1)), (0.5, Uniform(0.1, 1))))


def test_numeric_divergence_degenerate():
    expected = math.log(2 / 3 * math.e + 1 / 3 * math.exp(-2))
    assert renyi_divergence_numeric(DEG1, 1.0, 2) == pytest.approx(expected, abs=1e-9)
    assert renyi_divergence_numeric(MIX, 0.0, 3) == 0.0


@pytest.mark.parametrize("alpha,C", [(2, 1.0), (4, 0.5), (8, 1.0), (3, 2.0)])
def test_closed_form_equals_shared_scale_divergence(alpha, C):
    # the closed form is the divergence given a scale draw shared by both neighbours
    got = renyi_divergence_numeric(MIX, C, alpha, conditional=True)
    assert got == pytest.approx(lmo_rdp(MIX, C, alpha), rel=1e-8)


@pytest.mark.parametrize("alpha", [2, 8])
def test_closed_form_bounds_marginal_divergence(alpha):
    marginal = renyi_divergence_numeric(MIX, 1.0, alpha)
    assert marginal <= lmo_rdp(MIX, 1.0, alpha) + 1e-9


def test_linear_conditional_single_component():
    from lmodp.mgf import LINEAR
    s = MixtureSpec(((2.0, Uniform(0.2, 0.4)),), LINEAR)
    got = renyi_divergence_numeric(s, 1.0, 4, conditional=True)
    assert got == pytest.approx(lmo_rdp(s, 1.0, 4), rel=1e-8)


hist = st.lists(st.floats(0, 1), min_size=2, max_size=10).filter(lambda v: sum(v) > 0.1)


def transport_cost(p, q):
    """Exhaustive optimal transport on a line of bins via linear programming."""
    n = len(p)
    cost = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).ravel()
    a_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        a_eq[i, i * n:(i + 1) * n] = 1
        a_eq[n + i, i::n] = 1
    res = linprog(cost, A_eq=a_eq, b_eq=np.concatenate([p, q]), bounds=(0, None),
                  method="highs")
    return res.fun


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.01, 1), min_size=n, max_size=n),
    st.lists(st.floats(0.01, 1), min_size=n, max_size=n))))
def test_histogram_emd_is_optimal_transport(pq):
    p, q = (np.array(v) / sum(v) for v in pq)
    assert histogram_emd(p, q) == pytest.approx(transport_cost(p, q), abs=1e-9)
    assert histogram_emd(p, q, 0.25) == pytest.approx(0.25 * histogram_emd(p, q))


@settings(max_examples=60, deadline=None)
@given(hist, hist)
def test_metric_properties(a, b):
    n = min(len(a), len(b))
    p = np.array(a[:n]) / sum(a[:n]) if sum(a[:n]) > 0 else np.full(n, 1 / n)
    q = np.array(b[:n]) / sum(b[:n]) if sum(b[:n]) > 0 else np.full(n, 1 / n)
    for name, f in METRICS.items():
        assert f(p, p) == pytest.approx(0.0, abs=1e-12)
        assert f(p, q) >= 0
        if name != "kl":
            assert f(p, q) == pytest.approx(f(q, p), abs=1e-12)


def test_kl_known_value():
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
        0.5 * math.log(2) + 0.5 * math.log(2 / 3))
    assert l2_distance([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))


def test_entropy():
    assert empirical_entropy(np.full(100, 3.0)) == 0.0
    x = (np.arange(64_000) + 0.5) / 64_000
    assert empirical_entropy(x, np.linspace(0, 1, 65)) == pytest.approx(math.log(64), abs=1e-9)
    with pytest.raises(EmptyInput):
        empirical_entropy([])


def test_reduction_rate_scale_invariant():
    rng = make_rng(1)
    a = sample_gaussian_noise(1.0, 1.0, 10_000, rng)
    b = sample_gaussian_noise(3.0, 1.0, 10_000, rng)
    base = sample_stats(a, b)["reduction_rate"]
    for lam in (1e-3, 0.5, 7.0):
        assert sample_stats(lam * a, lam * b)["reduction_rate"] == pytest.approx(base, rel=1e-12)
    assert sample_stats(a, a)["reduction_rate"] == 0.0


def test_common_edges_cover_both():
    e = common_edges(np.arange(1000.0), np.arange(1000.0) + 500, bins=8)
    assert len(e) == 9 and e[0] < 10 and e[-1] > 1480


def test_match_moments():
    z = make_rng(2).standard_normal(50)
    z = (z - z.mean()) / z.std()
    y = match_moments(z, 0.1, 0.03)
    assert y.mean() == pytest.approx(0.1, rel=1e-6)
    assert y.std() == pytest.approx(0.03, rel=1e-6)
    assert np.all(y >= 0)


SMALL_GRID = SearchGrid(PrivacyBudget(1.0, 1e-10), components=("gamma", "uniform"),
                        weights=(0.3, 0.7), gamma_shapes=(2.0, 10.0),
                        gamma_scales=(1e-3, 1e-2),
                        uniform_pairs=tuple((lo, lo * 1.02) for lo in (0.1, 0.3, 1.0, 3.0)),
                        mode="linear")


def test_quantify_space_report():
    rep = quantify_space([0.1, 0.01], [10], M=20, grid=SMALL_GRID, repairings=4)
    assert len(rep.cells) == 2
    lines = rep.to_csv().splitlines()
    assert lines[0] == "q,k,M,mu_sim,sigma_sim,kl,l2,emd,kl_repaired,l2_repaired,emd_repaired"
    assert rep.table("emd")[(0.1, 10)] >= 0
    for bad in (0.3, 0.0, 1.5):
        with pytest.raises(InvalidQuantization):
            quantify_space([bad], [10], M=2, grid=SMALL_GRID)
    with pytest.raises(ValidationError):
        quantify_space([0.1], [10], M=2, grid=SMALL_GRID, metrics=("nope",))


def test_compare_noises_small():
    rep = compare_noises([1.0], grid=SMALL_GRID, n=100_000, seed=3)
    row = rep.rows[0]
    assert 0 < row.reduction_rate < 1
    assert rep.to_csv().splitlines()[0].startswith("eps,delta,gaussian_sigma,mean_abs_lmo")
    assert rep.to_csv() == compare_noises([1.0], grid=SMALL_GRID, n=100_000, seed=3,
                                          workers=2).to_csv()
    with pytest.raises(ValidationError):
        compare_noises([1.0], grid=SMALL_GRID, n=10)


def test_ablation_against_itself_is_zero():
    same = ablation_compare(("gamma", "uniform"), [1.0], n=50_000, full_grid=SMALL_GRID)
    assert same.rows[0].gap == 0.0


def test_mixture_beats_single_families():
    gamma_only = ablation_compare(("gamma",), [0.3], n=200_000).rows[0]
    assert gamma_only.mean_abs_full < gamma_only.mean_abs_variant
    uniform_only = ablation_compare(("uniform",), [0.3], n=200_000).rows[0]
    assert 0 <= uniform_only.gap < 0.05
