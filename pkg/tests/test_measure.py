import math

import numpy as np
import pytest
from scipy import stats as sps

from repp_lab.errors import IoFailure, TargetUnreachable
from repp_lab.measure import (
    EmpiricalMeasure,
    ExactArcsine,
    arcsine_cdf,
    ball_mass,
    exact_mass_fullquad,
    histogram_density,
    load,
    merge,
    radius_for_mass,
    sample_invariant,
    save,
)


def _uniform_measure(n=200_000, seed=0):
    x = np.sort(np.random.default_rng(seed).uniform(0, 1, n))
    return EmpiricalMeasure(x, 0, seed, "uniform", interval=(0.0, 1.0))


def test_quadratic_sample_mean_is_symmetric(quad_measure):
    # arcsine law on [-1, 1]: mean 0, variance 1/2. Orbit values are
    # uncorrelated at every lag (Chebyshev orthogonality), so the iid SE applies.
    x = quad_measure.samples
    se = math.sqrt(0.5 / x.shape[0])
    assert abs(x.mean()) <= 3 * se
    assert x.var() == pytest.approx(0.5, abs=5e-3)


def test_quadratic_samples_follow_arcsine(quad_measure):
    d = sps.kstest(quad_measure.samples[::50], np.vectorize(arcsine_cdf)).statistic
    assert d < 0.01


def test_doubling_samples_are_uniform(doubling_measure):
    d = sps.kstest(doubling_measure.samples, "uniform").statistic
    assert d <= 0.01


def test_same_seed_same_samples(quad):
    a = sample_invariant(quad, 20_000, 1_000, seed=7)
    b = sample_invariant(quad, 20_000, 1_000, seed=7)
    c = sample_invariant(quad, 20_000, 1_000, seed=8)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_ball_mass_examples(quad_measure):
    u = _uniform_measure()
    assert ball_mass(u, 0.5, 0.1) == pytest.approx(0.2, abs=5e-3)
    assert ball_mass(quad_measure, 0.0, 0.5) == pytest.approx(1 / 3, abs=3e-3)
    assert ball_mass(quad_measure, 0.0, 3.0) == 1.0


def test_exact_mass_examples():
    assert exact_mass_fullquad(0.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert exact_mass_fullquad(0.0, 0.5) == pytest.approx(1 / 3, abs=1e-15)
    expected = (math.asin(-0.98) + math.pi / 2) / math.pi
    assert exact_mass_fullquad(-1.0, 0.02) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.0637, abs=1e-4)


def test_exact_mass_matches_histogram(quad):
    # independent check of the closed form against a long orbit
    meas = sample_invariant(quad, 10_000_000, 10_000, seed=11, thin=1)
    for zeta, r in ((0.0, 0.5), (0.3, 0.1), (-1.0, 0.02)):
        assert ball_mass(meas, zeta, r) == pytest.approx(exact_mass_fullquad(zeta, r), abs=1e-3)


def test_histogram_density_near_arcsine(quad_measure):
    h = histogram_density(quad_measure, bins=50)
    mid = 0.5 * (h.edges[1:] + h.edges[:-1])
    exact = 1 / (math.pi * np.sqrt(1 - mid**2))
    inner = np.abs(mid) < 0.8
    assert np.max(np.abs(h.dens[inner] / exact[inner] - 1)) < 0.05
    assert h.total_mass() == pytest.approx(1.0)


def test_radius_for_mass_examples():
    assert radius_for_mass(ExactArcsine(), 0.0, 1 / 3) == pytest.approx(0.5, abs=1e-12)
    assert radius_for_mass(_uniform_measure(), 0.5, 0.2) == pytest.approx(0.1, abs=2e-3)
    with pytest.raises(TargetUnreachable):
        radius_for_mass(ExactArcsine(), 0.0, 0.0)
    with pytest.raises(TargetUnreachable):
        radius_for_mass(_uniform_measure(), 0.5, 0.0)


def test_radius_inverts_mass_at_the_endpoint():
    r = radius_for_mass(ExactArcsine(), -1.0, 1e-3)
    assert exact_mass_fullquad(-1.0, r) == pytest.approx(1e-3, rel=1e-9)


@pytest.mark.parametrize("zeta", [-0.7, 0.0, 0.5, 0.9])
def test_mass_is_monotone_in_radius(zeta, quad_measure):
    rs = np.geomspace(1e-4, 1.0, 30)
    exact = [exact_mass_fullquad(zeta, r) for r in rs]
    emp = [ball_mass(quad_measure, zeta, r) for r in rs]
    assert np.all(np.diff(exact) > 0)
    assert np.all(np.diff(emp) >= 0)


def test_save_load_round_trip(tmp_path, quad):
    meas = sample_invariant(quad, 10_000, 1_000, seed=2)
    save(meas, tmp_path / "m.bin")
    back = load(tmp_path / "m.bin")
    assert np.array_equal(back.samples, meas.samples)


def test_load_rejects_truncated_file(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"\x05\x00\x00\x00\x00\x00\x00\x00abc")
    with pytest.raises(IoFailure):
        load(tmp_path / "bad.bin")


def test_merge_keeps_sorted_union(quad):
    a = sample_invariant(quad, 10_000, 1_000, seed=1)
    b = sample_invariant(quad, 10_000, 1_000, seed=2)
    m = merge([a, b])
    assert m.n_samples == 20_000
    assert np.all(np.diff(m.samples) >= 0)
