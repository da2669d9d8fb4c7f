import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from repp_lab.errors import TooFewSamples, ZeroMean
from repp_lab.stats import (
    TestReport,
    bound_report,
    dispersion_ratio,
    geometric_pmf,
    geometric_tv,
    interval_report,
    ks_distance,
    ks_statistic,
    poisson_dispersion,
    sample_correlation,
    two_sample_ks,
    zero_mass_fraction,
)


def test_ks_hand_example():
    # max over i of i/n - F and F - (i-1)/n at {0.1, 0.5, 0.9}
    assert ks_statistic([0.1, 0.5, 0.9]) == pytest.approx(7 / 30, abs=1e-15)


def test_ks_distance_needs_twenty_samples():
    with pytest.raises(TooFewSamples):
        ks_distance([0.1, 0.5, 0.9])


def test_ks_constant_against_exponential():
    for n in (2, 5, 50):
        assert ks_statistic([1.0] * n, "exp") >= 0.5


@pytest.mark.parametrize("n", [100, 1000, 10_000])
def test_ks_of_exact_draws_is_small(n):
    x = np.random.default_rng(n).exponential(size=n)
    rep = ks_distance(x, "exp", threshold=1.63 / math.sqrt(n))
    assert rep.passed
    assert rep.statistic == pytest.approx(sps.kstest(x, "expon").statistic, abs=1e-12)


def test_ks_rate_parameter():
    x = np.random.default_rng(0).exponential(scale=0.5, size=5000)
    assert ks_statistic(x, ("exp", 2.0)) < 0.03
    assert ks_statistic(x, "exp") > 0.2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=200))
def test_ks_agrees_with_scipy(xs):
    assert ks_statistic(xs) == pytest.approx(sps.kstest(xs, "uniform").statistic, abs=1e-12)


def test_geometric_tv_examples():
    K = 20
    sizes = np.repeat(np.arange(1, K + 1), [2 ** (K - k) for k in range(1, K + 1)])
    assert geometric_tv(sizes, 0.5, kmax=10).statistic == pytest.approx(0.0, abs=1e-5)
    assert geometric_tv(np.ones(1000, int), 0.5).statistic == pytest.approx(0.5, abs=1e-15)


def test_geometric_tv_needs_samples():
    with pytest.raises(TooFewSamples):
        geometric_tv(np.ones(10, int), 0.5)


def test_geometric_pmf():
    assert np.allclose(geometric_pmf(0.5, 4), [0.5, 0.25, 0.125, 0.0625])


def test_dispersion_examples():
    assert dispersion_ratio([2] * 100) == 0.0
    counts = np.random.default_rng(3).poisson(4.0, 10_000)
    assert poisson_dispersion(counts, 0.05).passed
    with pytest.raises(ZeroMean):
        dispersion_ratio([0] * 100)
    with pytest.raises(TooFewSamples):
        dispersion_ratio([1] * 10)


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.77])
def test_compound_poisson_dispersion_moment(theta):
    # brute force: Poisson number of clusters, Geometric(theta) sizes
    rng = np.random.default_rng(17)
    n_clusters = rng.poisson(2.0, 200_000)
    sizes = rng.geometric(theta, n_clusters.sum())
    counts = np.add.reduceat(sizes, np.r_[0, np.cumsum(n_clusters)[:-1]])
    counts[n_clusters == 0] = 0
    assert dispersion_ratio(counts) == pytest.approx((2 - theta) / theta, rel=0.02)


def test_zero_mass_fraction_examples():
    assert zero_mass_fraction([0.5, 1.0, 2.0], 0.1) == 0.0
    assert zero_mass_fraction([0.0, 0.0, 1.0, 2.0], 0.1) == 0.5
    assert zero_mass_fraction([], 0.1) == 0.0


def test_two_sample_ks_examples():
    a = np.random.default_rng(1).uniform(size=500)
    assert two_sample_ks(a, a).statistic == 0.0
    assert two_sample_ks(a, a + 2.0).statistic == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_two_sample_ks_properties(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=150), rng.normal(0.3, size=200)
    d1 = two_sample_ks(a, b).statistic
    assert d1 == two_sample_ks(b, a).statistic
    assert 0.0 <= d1 <= 1.0
    assert d1 == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)


def test_report_serialisation():
    rep = interval_report(0.52, 0.5, 0.03, 100, "theta")
    assert rep.passed and rep.statistic == pytest.approx(0.02)
    d = json.loads(rep.to_json())
    assert d["pass"] is True and d["threshold"] == 0.03
    assert not bound_report(2.0, 1.0, 5, "x").passed
    assert isinstance(rep, TestReport)


def test_sample_correlation():
    x = np.arange(10.0)
    assert sample_correlation(x, 2 * x) == pytest.approx(1.0)
    assert math.isnan(sample_correlation(x, np.ones(10)))
