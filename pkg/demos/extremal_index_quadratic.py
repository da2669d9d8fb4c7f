"""Clustering of visits to a repelling fixed point of T(x) = 1 - 2x^2.

The fixed point 1/2 has |T'(1/2)| = 2, so an orbit that lands very close
to it stays nearby for a few steps and is then pushed out. Visits to a
small ball around 1/2 therefore come in runs, and the mean run length is
1/theta with theta = 1 - 1/2. A point that is not periodic (0.3 below)
shows no runs at all.

    python demos/extremal_index_quadratic.py
"""

import numpy as np

from repp_lab.maps import QuadraticMis, deriv_along_orbit
from repp_lab.measure import ExactArcsine, radius_for_mass, sample_invariant
from repp_lab.repp import (
    annulus_profile,
    clusters_from_chunks,
    make_target,
    simulate_hits,
    theta_estimates,
    theta_theoretical,
)
from repp_lab.stats import geometric_pmf

T = QuadraticMis(2.0)
meas = sample_invariant(T, 2_000_000, seed=1)
print(f"T'(1/2) = {deriv_along_orbit(T, 0.5, 1):+.1f}, theory theta = {theta_theoretical(T, 0.5, 1)}")

# shrinking balls around the fixed point, each holding a fixed arcsine mass
print("\n   mass      r        ratio   cluster fit   clusters")
for mass in (1e-2, 3e-3, 1e-3):
    r = radius_for_mass(ExactArcsine(), 0.5, mass)
    B = make_target(T, 0.5, r, period=1, mass=mass)
    hits = simulate_hits(T, B, 20_000_000, seed=2)
    clusters = clusters_from_chunks(hits, 1)
    est = theta_estimates(T, B, meas, clusters)
    print(f"  {mass:.0e}  {r:.2e}   {est.ratio:.4f}    {est.cluster_fit:.4f}    {est.n_clusters:>8}")

# the run lengths are geometric: P(K = k) = theta (1 - theta)^(k - 1)
sizes = clusters.sizes
emp = np.bincount(sizes, minlength=8)[1:8] / sizes.shape[0]
print("\n  k   empirical  geometric(1/2)")
for k, (e, g) in enumerate(zip(emp, geometric_pmf(0.5, 7)), start=1):
    print(f"  {k}    {e:.4f}     {g:.4f}")

# escape annuli Q_k = points that stay k more steps: mass halves each level
prof = annulus_profile(T, B, meas)
print("\nmu(Q_k)/mu(Q_0):", np.round([prof.geometric_ratio(k) for k in range(1, 6)], 3))

# a non-periodic centre: every visit is its own cluster
r = radius_for_mass(ExactArcsine(), 0.3, 1e-3)
B = make_target(T, 0.3, r, mass=1e-3)
sizes = clusters_from_chunks(simulate_hits(T, B, 20_000_000, seed=3), 1).sizes
print(f"\nzeta = 0.3: {sizes.shape[0]} visits, mean run length {sizes.mean():.4f}")
