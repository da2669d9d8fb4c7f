"""Inducing on the doubling map, checked against exact cylinder sums.

Take the base A = [0, 1/2) and a target E outside it. The shadow E' is
the part of A whose orbit visits E before coming back to A. Two unrelated
sums give the same number:

    mu(E')  =  mu(E and {r_A <= r_E}),

and under this equality the hitting times of E seen from A (counted in
returns to A, scaled by mu_A(E')) have the same law as the original
hitting times (counted in steps, scaled by mu(E)).

    python demos/inducing_doubling.py
"""

import numpy as np

from repp_lab.inducing import explicit_base
from repp_lab.maps import PiecewiseLinearMarkov
from repp_lab.oracle import (
    SymbolicSystem,
    exact_hitting_distribution,
    exact_shadow_measure,
    random_cylinder_pairs,
)
from repp_lab.repp import TargetSet, first_interarrival_pairs
from repp_lab.stats import two_sample_ks

T = PiecewiseLinearMarkov.doubling()
sys = SymbolicSystem(T, depth=20)

A, E = sys.cylinder((0,)), sys.cylinder((1, 0))
print("A = [0, 1/2), E = [1/2, 3/4):  (mu(E'), mu(E & {r_A <= r_E})) =", exact_shadow_measure(sys, A, E))

rng = np.random.default_rng(0)
gaps = [abs(np.subtract(*exact_shadow_measure(sys, a, e))) for a, e in random_cylinder_pairs(sys, 20, rng)]
print(f"20 random cylinder pairs: largest gap {max(gaps):.1e}")

# exact first-hitting law of the cylinder [1, 0, 1] from Lebesgue starts
p = exact_hitting_distribution(sys, sys.cylinder((1, 0, 1)), 12)
print("P(r = t), t = 1..12:", np.round(p, 4))

# original vs induced normalized first hitting times from common starts in A
lo, hi = 0.8134765625, 0.814453125  # a depth-10 cylinder, mass 2^-10
B = TargetSet(0.5 * (lo + hi), 0.5 * (hi - lo))
word = tuple(sys.symbols(lo, 10))
shadow, _ = exact_shadow_measure(sys, A, sys.cylinder(word))
pairs = first_interarrival_pairs(T, explicit_base(0.0, 0.5), B, 2000, mass_B=2.0**-10,
                                 mass_shadow_A=shadow / 0.5, seed=4)
rep = two_sample_ks(pairs.original, pairs.induced)
print(f"\ntarget {word}: mu_A(B') = {shadow / 0.5:.6f}")
print(f"means: original {pairs.original.mean():.3f}, induced {pairs.induced.mean():.3f}")
print(f"two-sample KS distance {rep.statistic:.4f} from {rep.n} starts")
