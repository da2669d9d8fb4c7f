from fractions import Fraction

import numpy as np
import pytest

from repp_lab.errors import DepthInsufficient, NotPeriodic, TargetNotCylinderAligned
from repp_lab.maps import PiecewiseLinearMarkov
from repp_lab.oracle import (
    SymbolicSystem,
    exact_hitting_distribution,
    exact_return_tail,
    exact_shadow_measure,
    exact_theta_linear,
    random_cylinder_pairs,
    theta_from_slopes,
)


@pytest.fixture(scope="module")
def sys20(doubling):
    return SymbolicSystem(doubling, 20)


def test_hitting_law_of_half(doubling):
    sys = SymbolicSystem(doubling, 8)
    p = exact_hitting_distribution(sys, sys.cylinder((0,)), 30)
    assert np.allclose(p, 0.5 ** np.arange(1, 31), rtol=0, atol=1e-16)


def test_whole_space_is_hit_at_once(doubling):
    sys = SymbolicSystem(doubling, 4)
    p = exact_hitting_distribution(sys, sys.cylinder((0,), (1,)), 5)
    assert p[0] == 1.0 and np.all(p[1:] == 0.0)


def test_hitting_mass_is_conserved(doubling):
    sys = SymbolicSystem(doubling, 10)
    p = exact_hitting_distribution(sys, sys.cylinder((1, 0, 1, 1)), 2000)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_return_tail_starts_at_one(doubling):
    sys = SymbolicSystem(doubling, 6)
    tail = exact_return_tail(sys, sys.cylinder((0, 1)), 10)
    assert tail[0] == 1.0 and np.all(np.diff(tail) <= 0)


def test_transition_rows_sum_to_one(doubling):
    sys = SymbolicSystem(doubling, 10)
    P = sys.transition_matrix()
    assert np.max(np.abs(np.asarray(P.sum(axis=1)).ravel() - 1)) <= 1e-12


def test_step_is_the_transition_matrix(doubling, rng):
    sys = SymbolicSystem(doubling, 8)
    v = rng.random(256)
    assert np.allclose(sys.step(v), v @ sys.transition_matrix().toarray(), atol=1e-14)


def test_transitions_follow_the_shift(doubling):
    sys = SymbolicSystem(doubling, 3)
    P = sys.transition_matrix().toarray()
    # [w0 w1 w2] -> [w1 w2 s]
    for i in range(8):
        for j in range(8):
            assert (P[i, j] > 0) == ((i % 4) == (j >> 1))


def test_shadow_hand_example(sys20):
    A, E = sys20.cylinder((0,)), sys20.cylinder((1, 0))
    assert exact_shadow_measure(sys20, A, E) == (0.25, 0.25)


def test_shadow_of_set_inside_base(sys20):
    A, E = sys20.cylinder((0,)), sys20.cylinder((0, 1, 1))
    lhs, rhs = exact_shadow_measure(sys20, A, E)
    assert lhs == rhs == pytest.approx(1 / 8, abs=1e-15)


def test_shadow_identity_random_pairs(sys20):
    rng = np.random.default_rng(2024)
    for A, E in random_cylinder_pairs(sys20, 20, rng):
        lhs, rhs = exact_shadow_measure(sys20, A, E)
        assert abs(lhs - rhs) <= 1e-10


def test_shadow_identity_on_unequal_branches():
    m = PiecewiseLinearMarkov((0, Fraction(1, 3), 1), (3, Fraction(-3, 2)))
    sys = SymbolicSystem(m, 12)
    rng = np.random.default_rng(7)
    for A, E in random_cylinder_pairs(sys, 10, rng):
        lhs, rhs = exact_shadow_measure(sys, A, E)
        assert abs(lhs - rhs) <= 1e-10


def test_shadow_truncation_is_detected(sys20):
    A, E = sys20.cylinder((0,) * 12), sys20.cylinder((1,) * 12)
    with pytest.raises(DepthInsufficient):
        exact_shadow_measure(sys20, A, E, depth=5)


def test_theta_examples(sys20):
    assert exact_theta_linear(sys20, 0, 1) == Fraction(1, 2)
    assert exact_theta_linear(sys20, Fraction(1, 3), 2) == Fraction(3, 4)
    assert theta_from_slopes([1]) == 0
    assert theta_from_slopes([2, -2]) == Fraction(3, 4)
    with pytest.raises(NotPeriodic):
        exact_theta_linear(sys20, Fraction(1, 5), 1)


def test_unaligned_interval_rejected(doubling):
    sys = SymbolicSystem(doubling, 6)
    with pytest.raises(TargetNotCylinderAligned):
        sys.from_interval(0, Fraction(1, 3))
    cs = sys.from_interval(Fraction(1, 4), Fraction(3, 4))
    assert sys.measure(cs) == 0.5


def test_word_intervals(doubling):
    sys = SymbolicSystem(doubling, 4)
    assert sys.word_interval((1, 1, 0)) == (Fraction(3, 4), Fraction(7, 8))
    assert sys.word_measure((1, 1, 0)) == Fraction(1, 8)
