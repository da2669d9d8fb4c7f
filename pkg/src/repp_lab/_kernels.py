"""Compiled inner loops.

Every map is flattened to ``(code, prm)`` where ``prm`` is a float64 vector
(see ``maps.MapSpec.packed``). All kernels release the GIL so chunked
orbit work can run on a thread pool.

Set membership conventions used throughout:
  * target balls are open:      lo < x < hi
  * base sets are half-open:    lo <= x < hi
"""

from __future__ import annotations

import numpy as np
from numba import njit

QUAD = 0
DOUBLY = 1
PLIN = 2

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def step(code, prm, x):
    if code == QUAD:
        return 1.0 - prm[0] * x * x
    if code == DOUBLY:
        if x < 0.0:
            if x <= prm[9]:
                s = 1.0 + x
                return x + prm[6] * s ** (1.0 + prm[0])
            if x < -prm[8]:
                u = x - prm[9]
                return prm[11] + u * (prm[12] + u * (prm[13] + u * prm[14]))
            return 1.0 - prm[4] * (-x) ** prm[2]
        if x < prm[8]:
            return -1.0 + prm[5] * x ** prm[3]
        if x < prm[10]:
            u = x - prm[8]
            return prm[15] + u * (prm[16] + u * (prm[17] + u * prm[18]))
        s = 1.0 - x
        return x - prm[7] * s ** (1.0 + prm[1])
    # piecewise linear, full branch
    nb = int(prm[0])
    i = 0
    while i < nb - 1 and x >= prm[2 + i]:
        i += 1
    y = prm[2 + 2 * nb + i] + prm[2 + nb + i] * (x - prm[1 + i])
    if y < 0.0:
        y = 0.0
    elif y > 1.0:
        y = 1.0
    return y


@njit(**_JIT)
def dstep(code, prm, x):
    """Derivative of the active branch (junction handling is done in Python)."""
    if code == QUAD:
        return -2.0 * prm[0] * x
    if code == DOUBLY:
        if x < 0.0:
            if x <= prm[9]:
                s = 1.0 + x
                return 1.0 + prm[6] * (1.0 + prm[0]) * s ** prm[0]
            if x < -prm[8]:
                u = x - prm[9]
                return prm[12] + u * (2.0 * prm[13] + 3.0 * u * prm[14])
            return prm[4] * prm[2] * (-x) ** (prm[2] - 1.0)
        if x < prm[8]:
            return prm[5] * prm[3] * x ** (prm[3] - 1.0)
        if x < prm[10]:
            u = x - prm[8]
            return prm[16] + u * (2.0 * prm[17] + 3.0 * u * prm[18])
        s = 1.0 - x
        return 1.0 + prm[7] * (1.0 + prm[1]) * s ** prm[1]
    nb = int(prm[0])
    i = 0
    while i < nb - 1 and x >= prm[2 + i]:
        i += 1
    return prm[2 + nb + i]


# ---------------------------------------------------------------------------
# forward orbit engines (non-PL maps)
#
# Floating-point orbits of these maps can fall exactly onto a fixed point
# (e.g. |x| < 7e-9 rounds 1 - 2x^2 to 1, then to the fixed point -1) or onto
# a spurious numerical fixed point next to a neutral endpoint. Such an orbit
# is dead for statistics, so the engines restart from the next reserve point
# whenever step(x) == x exactly. Restarts are counted and reported.


# The guard is written out in each loop: routing it through a helper that
# takes the reserve/state arrays costs ~60 ns per step.


@njit(**_JIT)
def orbit_fill(code, prm, x0, burn, thin, out, reserve, state):
    nres = reserve.shape[0]
    k = state[0]
    dead = state[1]
    x = x0
    n = out.shape[0]
    for i in range(burn + n * thin):
        if i >= burn and (i - burn) % thin == 0:
            out[(i - burn) // thin] = x
        y = step(code, prm, x)
        # an empty reserve disables the guard (pointwise semantics)
        if y == x and nres > 0:
            if k < nres:
                y = reserve[k]
                k += 1
            else:
                dead = 1
        x = y
    state[0] = k
    state[1] = dead
    return x


@njit(**_JIT)
def scan_hits(code, prm, x0, burn, n, lo, hi, reserve, state):
    """Indices i in [0, n) (counted after burn-in) with lo < T^i x < hi."""
    nres = reserve.shape[0]
    k = state[0]
    dead = state[1]
    x = x0
    cap = 1024
    buf = np.empty(cap, dtype=np.int64)
    m = 0
    for j in range(burn + n):
        if j >= burn and lo < x < hi:
            if m == cap:
                cap *= 2
                nb = np.empty(cap, dtype=np.int64)
                nb[:m] = buf[:m]
                buf = nb
            buf[m] = j - burn
            m += 1
        y = step(code, prm, x)
        if y == x and nres > 0:
            if k < nres:
                y = reserve[k]
                k += 1
            else:
                dead = 1
        x = y
    state[0] = k
    state[1] = dead
    return buf[:m]


@njit(**_JIT)
def hits_in_array(xs, lo, hi):
    cap = 1024
    buf = np.empty(cap, dtype=np.int64)
    m = 0
    for i in range(xs.shape[0]):
        x = xs[i]
        if lo < x < hi:
            if m == cap:
                cap *= 2
                nb = np.empty(cap, dtype=np.int64)
                nb[:m] = buf[:m]
                buf = nb
            buf[m] = i
            m += 1
    return buf[:m]


@njit(**_JIT)
def pl_backward_orbit(prm, symbols, x_end, out):
    """out[j] = phi_{s_j}(out[j+1]) with out[n] = x_end; exact T-orbit in law."""
    nb = int(prm[0])
    n = symbols.shape[0]
    y = x_end
    for j in range(n - 1, -1, -1):
        s = symbols[j]
        y = prm[1 + s] + (y - prm[2 + 2 * nb + s]) / prm[2 + nb + s]
        out[j] = y
    return out


# ---------------------------------------------------------------------------
# pointwise first-return / shadow machinery, vectorised over start points


@njit(**_JIT)
def first_return(code, prm, x, lo, hi, cap):
    """(r, image) with r = inf{k>=1 : lo <= T^k x < hi}; r = -1 if capped."""
    y = x
    for k in range(1, cap + 1):
        y = step(code, prm, y)
        if lo <= y < hi:
            return k, y
    return -1, y


@njit(**_JIT)
def return_times(code, prm, xs, lo, hi, cap):
    out = np.empty(xs.shape[0], dtype=np.int64)
    for i in range(xs.shape[0]):
        r, _ = first_return(code, prm, xs[i], lo, hi, cap)
        out[i] = r
    return out


@njit(**_JIT)
def shadow_lag(code, prm, x, a_lo, a_hi, b_lo, b_hi, cap):
    """min{k>=0 : T^k x in B, k < r_A(x)}; -1 if none, -2 if capped."""
    y = x
    if b_lo < y < b_hi:
        return 0
    for k in range(1, cap + 1):
        y = step(code, prm, y)
        if a_lo <= y < a_hi:
            return -1
        if b_lo < y < b_hi:
            return k
    return -2


@njit(**_JIT)
def shadow_lags(code, prm, xs, a_lo, a_hi, b_lo, b_hi, cap):
    out = np.empty(xs.shape[0], dtype=np.int64)
    for i in range(xs.shape[0]):
        out[i] = shadow_lag(code, prm, xs[i], a_lo, a_hi, b_lo, b_hi, cap)
    return out


@njit(**_JIT)
def base_before_target(code, prm, xs, a_lo, a_hi, b_lo, b_hi, cap):
    """1 if r_A <= r_B, 0 if r_B < r_A, -2 if capped (hitting times k >= 1)."""
    out = np.empty(xs.shape[0], dtype=np.int64)
    for i in range(xs.shape[0]):
        y = xs[i]
        res = -2
        for _ in range(cap):
            y = step(code, prm, y)
            if a_lo <= y < a_hi:
                res = 1
                break
            if b_lo < y < b_hi:
                res = 0
                break
        out[i] = res
    return out


@njit(**_JIT)
def annulus_indices(code, prm, xs, p, lo, hi, max_depth):
    """Smallest k with T^{(k+1)p} x outside (lo, hi); -1 past max_depth."""
    out = np.empty(xs.shape[0], dtype=np.int64)
    for i in range(xs.shape[0]):
        y = xs[i]
        res = -1
        for k in range(max_depth + 1):
            for _ in range(p):
                y = step(code, prm, y)
            if not (lo < y < hi):
                res = k
                break
        out[i] = res
    return out


@njit(**_JIT)
def entrance_flags(code, prm, xs, p, lo, hi):
    out = np.zeros(xs.shape[0], dtype=np.bool_)
    for i in range(xs.shape[0]):
        x = xs[i]
        if lo < x < hi:
            continue
        y = x
        for _ in range(p):
            y = step(code, prm, y)
        out[i] = lo < y < hi
    return out


@njit(**_JIT)
def induced_scan(code, prm, x0, a_lo, a_hi, b_lo, b_hi, n_induced, cap):
    """Walk the induced map from x0 in A.

    Returns (induced indices i with T_A^i x0 in B', original-time index of
    each induced step, number of capped excursions). A capped excursion ends
    the walk.
    """
    size = 1024
    buf = np.empty(size, dtype=np.int64)
    m = 0
    times = np.empty(n_induced + 1, dtype=np.int64)
    x = x0
    t = 0
    censored = 0
    n_done = n_induced + 1
    for i in range(n_induced + 1):
        times[i] = t
        in_shadow = b_lo < x < b_hi
        y = x
        k = 0
        returned = False
        while k < cap:
            y = step(code, prm, y)
            k += 1
            if a_lo <= y < a_hi:
                returned = True
                break
            if b_lo < y < b_hi:
                in_shadow = True
        if in_shadow:
            if m == size:
                size *= 2
                nb = np.empty(size, dtype=np.int64)
                nb[:m] = buf[:m]
                buf = nb
            buf[m] = i
            m += 1
        if not returned:
            censored = 1
            n_done = i + 1
            break
        x = y
        t += k
    return buf[:m], times[:n_done], censored


@njit(**_JIT)
def paired_first_hits(code, prm, xs, a_lo, a_hi, b_lo, b_hi, cap):
    """For starts x in A: (r_B(x), induced hitting time of B') per start.

    r_B counts original steps k >= 1; the induced time counts base returns
    j >= 1 such that T_A^j x lies in the shadow of B. -1 marks censoring.
    """
    n = xs.shape[0]
    orig = np.full(n, -1, dtype=np.int64)
    ind = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        y = xs[i]
        j = 0
        steps = 0
        while steps < cap:
            y = step(code, prm, y)
            steps += 1
            if a_lo <= y < a_hi:
                j += 1
                # y is a base point T_A^j x; is it in the shadow?
                if ind[i] < 0:
                    if b_lo < y < b_hi:
                        ind[i] = j
                    else:
                        lag = shadow_lag(code, prm, y, a_lo, a_hi, b_lo, b_hi, cap)
                        if lag >= 0:
                            ind[i] = j
            if orig[i] < 0 and b_lo < y < b_hi:
                orig[i] = steps
            if orig[i] >= 0 and ind[i] >= 0:
                break
    return orig, ind


@njit(**_JIT)
def paired_from_orbit(xs, a_lo, a_hi, b_lo, b_hi):
    """Array version of paired_first_hits for a precomputed orbit xs[0..L].

    Returns (r_B, induced index) with -1 where the orbit is too short to
    decide.
    """
    n = xs.shape[0]
    orig = -1
    for k in range(1, n):
        if b_lo < xs[k] < b_hi:
            orig = k
            break
    ind = -1
    j = 0
    seen_return = False
    for k in range(1, n):
        y = xs[k]
        if a_lo <= y < a_hi:
            j += 1
            seen_return = True
        if seen_return and b_lo < y < b_hi:
            ind = j
            break
    return orig, ind
