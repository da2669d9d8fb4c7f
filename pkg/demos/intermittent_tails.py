"""Return tails and clustering for a map with two neutral fixed points.

The doubly intermittent map has T'(+-1) = 1, with T(x) = x + (1+x)^(5/4)
near -1. An orbit that wanders close to -1 crawls away slowly, so the
return time to the base Delta_0^- = [T_-^{-1}(0), 0) has a polynomial
tail of order t^(-1/beta), beta = 1/4 here.

Near a periodic point in the interior the map expands, and visits cluster
with theta = 1 - 1/|(T^2)'(zeta)|. At the neutral point itself nothing
pushes the orbit out, and the escape ratio mu(Q)/mu(B) drifts to 0 as the
ball shrinks.

    python demos/intermittent_tails.py
"""

import numpy as np

from repp_lab.inducing import base_delta0, partition_tail, return_tail
from repp_lab.maps import DoublyIntermittent, deriv_along_orbit, find_periodic, validate_doubly_intermittent
from repp_lab.measure import radius_for_mass, sample_invariant
from repp_lab.repp import annulus_profile, make_target, theta_theoretical

T = DoublyIntermittent(0.25, 0.25)
rep = validate_doubly_intermittent(T)
print(f"beta = {rep.beta}, minimal expansion on the partition cells {rep.lambda_hat:.3f}")

meas = sample_invariant(T, 5_000_000, seed=3, thin=3)
A = base_delta0(T, -1)
t = np.unique(np.geomspace(1, 1000, 25).astype(int))
emp = return_tail(T, A, meas, t, fit_range=(10, 1000))
part = partition_tail(T, meas, t, side=-1, fit_range=(10, 1000))
print("\n     t     Monte Carlo    partition")
for ti, a, b in zip(t[::3], emp.tail[::3], part.tail[::3]):
    print(f"  {ti:>5}    {a:.3e}     {b:.3e}")
print(f"log-log slope over [10, 1000]: {part.loglog_slope:.3f} (theory {-1 / T.beta:g})")

# a period-2 orbit between the two branches
zeta = find_periodic(T, 2, (-0.25, -0.2))
d = deriv_along_orbit(T, zeta, 2)
print(f"\nperiod-2 point {zeta:.10f}, (T^2)' = {d:.4f}, theta = {theta_theoretical(T, zeta, 2):.5f}")
for mass in (1e-2, 1e-3):
    B = make_target(T, zeta, radius_for_mass(meas, zeta, mass), period=2)
    print(f"  mass {mass:.0e}: mu(Q)/mu(B) = {annulus_profile(T, B, meas).ratio:.4f}")

print("\nneutral point -1:")
for mass in (1e-2, 1e-3, 3e-4):
    B = make_target(T, -1.0, radius_for_mass(meas, -1.0, mass), period=1)
    print(f"  mass {mass:.0e}: mu(Q)/mu(B) = {annulus_profile(T, B, meas).ratio:.4f}")
