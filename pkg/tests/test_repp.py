import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repp_lab.inducing import base_misiurewicz, explicit_base, induced_orbit
from repp_lab.maps import orbit
from repp_lab.measure import ExactArcsine, radius_for_mass
from repp_lab.oracle import SymbolicSystem, symbolic_hits
from repp_lab.repp import (
    HitSeries,
    TargetSet,
    annulus_index,
    annulus_indices,
    annulus_profile,
    cluster_fit,
    clusters_from_chunks,
    decode_hits,
    encode_hits,
    entrance_member,
    extract_clusters,
    hit_times,
    induced_hit_series,
    make_target,
    simulate_hits,
    theta_estimates,
    theta_theoretical,
    window_counts,
)


def _ball(m, zeta, mass, period=None):
    r = radius_for_mass(ExactArcsine(), zeta, mass)
    return make_target(m, zeta, r, period=period, mass=mass)


# -- clusters ---------------------------------------------------------------

def test_extract_clusters_examples():
    assert extract_clusters(np.array([100, 101, 102, 500]), 1).clusters == [(100, 3), (500, 1)]
    assert extract_clusters(np.array([100, 102, 104, 500]), 2).clusters == [(100, 3), (500, 1)]
    c = extract_clusters(np.array([100, 102, 104, 500]), 1)
    assert c.clusters == [(100, 1), (102, 1), (104, 1), (500, 1)]


def test_extract_clusters_empty():
    assert extract_clusters(np.empty(0, np.int64), 1).n_clusters == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 5000), max_size=300, unique=True), st.integers(1, 4))
def test_cluster_sizes_sum_to_hits(idx, p):
    h = np.array(sorted(idx), dtype=np.int64)
    c = extract_clusters(h, p)
    assert int(c.sizes.sum()) == h.shape[0]
    # every gap between consecutive clusters differs from p
    assert np.all(c.inter_cluster_gaps() != p)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 10**12), max_size=200, unique=True), st.floats(1e-6, 0.5))
def test_binary_round_trip(idx, mass):
    h = HitSeries(np.array(sorted(idx), dtype=np.int64), 10**12, mass)
    back = decode_hits(encode_hits(h))
    assert np.array_equal(back.hit_indices, h.hit_indices)
    assert back.mass == h.mass and back.horizon == h.horizon


def test_csv_round_trip():
    h = HitSeries(np.array([3, 4, 9]), 10, 0.1)
    lines = h.to_csv().splitlines()
    assert lines[0] == "index"
    assert [int(v) for v in lines[1:]] == [3, 4, 9]
    c = extract_clusters(h, 1)
    assert c.to_csv().splitlines() == ["start,size", "3,2", "9,1"]


def test_runs_compress(quad):
    h = HitSeries(np.arange(0, 10_000, 3), 10_000, 0.01)
    assert len(encode_hits(h)) < 100


# -- hit series -------------------------------------------------------------

def test_fixed_point_hits_every_step(doubling):
    h = hit_times(doubling, 0.0, TargetSet(0.0, 0.01), 50)
    assert np.array_equal(h.hit_indices, np.arange(51))


def test_unreachable_target_gives_empty_series(quad):
    # the orbit of 0 is 0, 1, -1, -1, ...
    h = hit_times(quad, 0.0, TargetSet(0.5, 0.1), 100)
    assert h.n_hits == 0


def test_hits_match_symbolic_orbit(doubling, rng):
    sys = SymbolicSystem(doubling, 3)
    target = sys.cylinder((1, 1, 0))  # [3/4, 7/8)
    B = TargetSet(0.8125, 0.0625)
    for _ in range(200):
        x0 = int(rng.integers(1, 2**53)) / 2**53
        got = hit_times(doubling, x0, B, 30).hit_indices.tolist()
        assert got == symbolic_hits(sys, target, Fraction(x0), 30)


# -- annuli -----------------------------------------------------------------

def test_annulus_index_examples(quad):
    B = _ball(quad, 0.5, 1e-2, period=1)
    x = B.hi - 1e-9  # leaves at the first step: T' = -2 pushes it past the far end
    assert annulus_index(quad, B, x) == 0
    assert annulus_index(quad, B, 0.5) is None


@pytest.mark.parametrize("d", [1e-4, 1e-6, 1e-8, 1e-10])
def test_annulus_index_grows_like_log_distance(quad, d):
    B = _ball(quad, 0.5, 1e-2, period=1)
    # |T'(1/2)| = 2: the distance doubles each step until it exceeds r
    k = annulus_index(quad, B, 0.5 + d)
    assert abs(k - math.log2(B.r / d)) <= 2


def test_entrance_examples(quad):
    B = _ball(quad, 0.5, 1e-2, period=1)
    assert not entrance_member(quad, B, 0.5)
    assert entrance_member(quad, B, -0.5)  # T(-1/2) = 1/2


def test_annulus_matches_cluster_runs(quad):
    # a hit lies in Q_k exactly when k more hits follow at gap p in its cluster
    B = _ball(quad, 0.5, 1e-2, period=1)
    horizon = 200_000
    xs = orbit(quad, 0.1234, horizon)
    h = hit_times(quad, 0.1234, B, horizon)
    c = extract_clusters(h, 1)
    expected = np.concatenate([np.arange(s - 1, -1, -1) for s in c.sizes])
    got = annulus_indices(quad, B, xs[h.hit_indices])
    last = c.sizes[-1]  # the final cluster may be cut by the horizon
    assert np.array_equal(got[:-last], expected[:-last])


# -- extremal index ---------------------------------------------------------

def test_theta_theoretical_examples(quad, di):
    assert theta_theoretical(quad, 0.5, 1) == 0.5
    assert theta_theoretical(quad, -1.0, 1, on_critical_orbit=True) == 0.5
    assert theta_theoretical(di, -1.0, 1) == 0.0


def test_cluster_fit_of_geometric_frequencies():
    K = 24
    sizes = np.repeat(np.arange(1, K + 1), [2 ** (K - k) for k in range(1, K + 1)])
    theta, _ = cluster_fit(sizes)
    assert theta == pytest.approx(0.5, abs=1e-5)


def test_theta_estimates_at_fixed_point(quad, quad_measure):
    B = _ball(quad, 0.5, 1e-2, period=1)
    hits = simulate_hits(quad, B, 10_000_000, seed=5)
    est = theta_estimates(quad, B, quad_measure, clusters_from_chunks(hits, 1))
    assert est.theoretical == 0.5
    assert abs(est.ratio - 0.5) <= 0.03
    assert abs(est.cluster_fit - 0.5) <= 0.03


def test_theta_estimates_non_periodic(quad, quad_measure):
    B = _ball(quad, 0.3, 1e-2)
    hits = simulate_hits(quad, B, 2_000_000, seed=6)
    est = theta_estimates(quad, B, quad_measure, clusters_from_chunks(hits, 1))
    assert est.ratio == 1.0
    assert est.cluster_fit == pytest.approx(1.0, abs=0.01)


def test_annulus_profile_geometric_ratios(quad, quad_measure):
    B = _ball(quad, 0.5, 1e-2, period=1)
    prof = annulus_profile(quad, B, quad_measure)
    for k in range(1, 5):
        assert prof.geometric_ratio(k) == pytest.approx(0.5 ** (k - 1), abs=0.05)
    # entrance and escape annuli carry equal mass
    assert abs(prof.entrance - prof.counts[0]) <= 4 * math.sqrt(prof.counts[0])


def test_compound_hit_counts_are_overdispersed(quad):
    # Var/E of a Geometric(theta)-compounded Poisson count is (2 - theta)/theta
    B = _ball(quad, 0.5, 1e-3, period=1)
    hits = simulate_hits(quad, B, 40_000_000, seed=9)
    counts = window_counts(hits, 1000)
    ratio = counts.var(ddof=1) / counts.mean()
    assert ratio == pytest.approx(3.0, rel=0.15)


# -- induced series ---------------------------------------------------------

def test_induced_series_when_target_inside_base(quad):
    A = base_misiurewicz(quad)
    B = TargetSet(0.05, 0.02)
    x0 = 0.1
    recs = induced_orbit(quad, A, x0, 300)
    times = np.concatenate(([0], np.cumsum([r.r_A for r in recs])))
    ind = induced_hit_series(quad, A, B, x0, 300, mass=1.0)
    orig = hit_times(quad, x0, B, int(times[-1]))
    assert np.array_equal(times[ind.hit_indices], orig.hit_indices)


def _exact_induced_law(doubling, j_max, t_max=200):
    """P(J = j), J = returns to A = [0, 1/2) before the first visit to [3/4, 1), x ~ Leb on A."""
    sys = SymbolicSystem(doubling, 2)
    in_a = sys.mask(sys.cylinder((0,)), 2)
    in_b = sys.mask(sys.cylinder((1, 1)), 2)
    layers = np.zeros((j_max + 2, 4))
    layers[0] = np.where(in_a, sys.weights(2), 0.0) * 2
    law = np.zeros(j_max + 2)
    for _ in range(t_max):
        layers = np.array([sys.step(v) for v in layers])
        law += layers[:, in_b].sum(axis=1)
        layers[:, in_b] = 0.0
        moved = layers[:, in_a].copy()
        layers[:, in_a] = 0.0
        layers[1:, in_a] += moved[:-1]
        layers[-1, in_a] += moved[-1]
    return law


def test_induced_first_hit_matches_exact_law(doubling, rng):
    A = explicit_base(0.0, 0.5)
    B = TargetSet(0.875, 0.125)
    j_max = 12
    law = _exact_induced_law(doubling, j_max)
    assert law.sum() == pytest.approx(1.0, abs=1e-12)
    n = 20_000
    # a float doubling orbit runs out of bits after 53 steps; such starts
    # (no [1, 1] pair among their bits) go to the overflow cell
    firsts = np.full(n, j_max + 1, np.int64)
    for i in range(n):
        x0 = int(rng.integers(0, 2**52)) / 2**53
        s = induced_hit_series(doubling, A, B, x0, 60, mass=1.0)
        if s.n_hits:
            firsts[i] = s.hit_indices[0]
    assert np.mean(firsts > j_max) < law[-1] + 1e-3
    emp = np.bincount(np.minimum(firsts, j_max + 1), minlength=j_max + 2) / n
    assert np.all(np.abs(emp - law) <= 4 / math.sqrt(n))
