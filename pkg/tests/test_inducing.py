import math

import numpy as np
import pytest

from repp_lab.errors import ReturnCapExceeded, WrongFamily
from repp_lab.inducing import (
    base_delta0,
    base_misiurewicz,
    explicit_base,
    exact_geometric_tail,
    first_return,
    hyp_diagnostics,
    induced_orbit,
    partition_tail,
    return_tail,
    shadow_estimate,
    shadow_query,
    write_tail_csv,
)
from repp_lab.maps import iterate_n
from repp_lab.measure import ExactArcsine, radius_for_mass, sample_invariant
from repp_lab.oracle import SymbolicSystem, exact_return_tail
from repp_lab.repp import TargetSet, make_target

HALF = explicit_base(0.0, 0.5)


def _interval_target(lo, hi):
    return TargetSet(0.5 * (lo + hi), 0.5 * (hi - lo))


def test_first_return_examples(doubling):
    rec = first_return(doubling, HALF, 0.3)
    assert rec.r_A == 2 and rec.image == pytest.approx(0.2, abs=1e-15)
    rec = first_return(doubling, HALF, 0.1)
    assert rec.r_A == 1 and rec.image == pytest.approx(0.2, abs=1e-15)


def test_first_return_cap(di):
    A = base_delta0(di, -1)
    # a point next to the neutral end -1 lingers there for many steps
    with pytest.raises(ReturnCapExceeded):
        first_return(di, A, -0.9999, cap=5)


def test_induced_orbit_chains_return_times(quad):
    A = base_misiurewicz(quad)
    x = 0.1
    recs = induced_orbit(quad, A, x, 20)
    total = sum(r.r_A for r in recs)
    # re-evaluating the summed time drifts by chaotic amplification only
    assert recs[-1].image == iterate_n(quad, x, total)


def test_base_delta0_shapes(di):
    left, right = base_delta0(di, -1), base_delta0(di, +1)
    assert left.hi == 0.0 and left.lo < 0
    assert right.lo == 0.0
    assert right.hi == pytest.approx(-left.lo, abs=1e-14)


def test_base_delta0_wrong_family(quad):
    with pytest.raises(WrongFamily):
        base_delta0(quad, -1)


def test_base_misiurewicz(quad):
    A = base_misiurewicz(quad, max_p=8, max_xi=0.3)
    assert 0 < A.xi < 0.3
    assert abs(iterate_n(quad, A.xi, A.period) - A.xi) <= 1e-13
    # no orbit point of xi falls inside the base
    assert all(abs(iterate_n(quad, A.xi, q)) >= A.xi for q in range(1, A.period))


def test_doubling_return_tail_is_geometric(doubling):
    t = list(range(0, 12))
    sys = SymbolicSystem(doubling, 4)
    exact = exact_return_tail(sys, sys.cylinder((0,)), 11)
    assert np.allclose(exact, exact_geometric_tail(t, 0.5), atol=1e-15)
    meas = sample_invariant(doubling, 1_000_000, 1_000, seed=4)
    curve = return_tail(doubling, HALF, meas, t)
    # returns of successive visits use disjoint symbol blocks, so counts are binomial
    se = np.sqrt(exact * (1 - exact) / curve.n)
    assert np.all(np.abs(curve.tail - exact) <= 4 * se + 1e-15)


def test_return_tail_is_non_increasing(di, di_measure):
    A = base_delta0(di, -1)
    curve = return_tail(di, A, di_measure, np.geomspace(1, 2000, 50).astype(int), max_starts=20_000)
    assert np.all(np.diff(curve.tail) <= 0)
    assert curve.censored == 0


def test_di_partition_tail_slope(di, di_measure):
    t = np.unique(np.geomspace(10, 1000, 30).astype(int))
    curve = partition_tail(di, di_measure, t, side=-1, fit_range=(10, 1000))
    assert curve.loglog_slope <= -3.5
    assert np.all(np.diff(curve.tail) <= 0)


def test_quadratic_tail_is_exponential(quad, quad_measure):
    A = base_misiurewicz(quad)
    t = np.arange(1, 41)
    curve = return_tail(quad, A, quad_measure, t, fit_range=(1, 40))
    assert curve.loglin_r2 >= 0.98


def test_tail_csv_columns(doubling, doubling_measure):
    curve = return_tail(doubling, HALF, doubling_measure, [1, 2, 3])
    lines = write_tail_csv(curve).splitlines()
    assert lines[0] == "t,tail,ci_lo,ci_hi"
    assert len(lines) == 4


def test_shadow_query_examples(doubling):
    B = _interval_target(0.5, 0.75)
    assert shadow_query(doubling, HALF, B, 0.3).lag == 1
    assert shadow_query(doubling, HALF, B, 0.05).lag is None
    inner = _interval_target(0.1, 0.2)
    assert shadow_query(doubling, HALF, inner, 0.15).lag == 0


def test_doubling_shadow_mass_is_a_quarter(doubling, doubling_measure):
    B = _interval_target(0.5, 0.75)
    est = shadow_estimate(doubling, HALF, B, doubling_measure)
    assert abs(est.shadow_mass - 0.25) <= 4 * est.se_shadow
    # T(E) lies in A, so every point of E reaches A first
    assert est.identity_rhs == est.target_mass


def test_target_inside_base_is_its_own_shadow(doubling, doubling_measure):
    B = _interval_target(0.1, 0.2)
    est = shadow_estimate(doubling, HALF, B, doubling_measure)
    assert est.shadow_mass == pytest.approx(est.target_mass, rel=1e-12)
    assert est.identity_rhs == est.target_mass
    assert hyp_diagnostics(doubling, HALF, B, doubling_measure).h1 == 0.0


def test_h2_vanishes_when_target_maps_into_base(doubling, doubling_measure):
    B = _interval_target(0.5, 0.5 + 2**-8)
    assert hyp_diagnostics(doubling, HALF, B, doubling_measure).h2 == 0.0


@pytest.fixture(scope="module")
def long_quad_measure(quad):
    return sample_invariant(quad, 10_000_000, 10_000, seed=2)


def test_h1_decays_along_shrinking_targets(quad, long_quad_measure):
    A = base_misiurewicz(quad)
    h1 = []
    for mass in (3e-3, 1e-3, 3e-4, 1e-4):
        B = make_target(quad, 0.3, radius_for_mass(ExactArcsine(), 0.3, mass))
        h1.append(hyp_diagnostics(quad, A, B, long_quad_measure, eps=0.01).h1)
    assert all(b <= a for a, b in zip(h1, h1[1:]))
    assert h1[0] > 0.5 and h1[-1] < 0.01


def test_shadow_equals_target_once_the_orbit_enters_the_base(quad, long_quad_measure):
    # 0.3 -> ... -> -0.162 lies inside the base, so small balls around 0.3
    # are entered only via the base
    A = base_misiurewicz(quad)
    assert any(A.lo < iterate_n(quad, 0.3, k) < A.hi for k in range(1, 6))
    B = make_target(quad, 0.3, radius_for_mass(ExactArcsine(), 0.3, 1e-3))
    est = shadow_estimate(quad, A, B, long_quad_measure)
    se_target = math.sqrt(est.target_mass * (1 - est.target_mass) / long_quad_measure.n_samples)
    assert abs(est.shadow_mass - est.target_mass) <= 2 * math.hypot(est.se_shadow, se_target)
