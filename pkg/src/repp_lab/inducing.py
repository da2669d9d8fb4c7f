"""Inducing bases, first returns, return-time tails and shadow sets.

A base A is an interval with half-open membership ``lo <= x < hi``.
Targets are open balls ``lo < x < hi`` (any object with ``lo``/``hi``
attributes works, normally :class:`repp_lab.repp.TargetSet`).

The shadow of a target B in A is the set of base points whose excursion
visits B before the next return to A, time 0 included:

    B' = union over k >= 0 of  A  &  {r_A > k}  &  T^{-k} B.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .errors import (
    InsufficientBaseSamples,
    NoPeriodicPointFound,
    NotPrimePeriod,
    NoConvergence,
    ReturnCapExceeded,
    WrongFamily,
)
from .maps import (
    DoublyIntermittent,
    MapSpec,
    QuadraticMis,
    _check_point,
    branch_inverse,
    find_periodic,
    iterate_n,
)
from .measure import EmpiricalMeasure
from .orbits import run_tasks

DEFAULT_CAP = 10_000_000
MIN_BASE_SAMPLES = 10_000


@dataclass(frozen=True)
class BaseSet:
    kind: str  # "misiurewicz" | "delta0-" | "delta0+" | "interval"
    lo: float
    hi: float
    period: int | None = None
    xi: float | None = None

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("base set must have positive length")

    def contains(self, x: float) -> bool:
        return self.lo <= x < self.hi

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "period": self.period, "xi": self.xi}


def explicit_base(lo: float, hi: float) -> BaseSet:
    return BaseSet("interval", float(lo), float(hi))


@dataclass(frozen=True)
class ReturnRecord:
    x: float
    r_A: int
    image: float


@dataclass(frozen=True)
class ShadowQuery:
    base: BaseSet
    target: object
    lag: int | None


# ---------------------------------------------------------------------------
# bases


def base_delta0(m: MapSpec, side: int) -> BaseSet:
    """Delta_0^- = [T_-^{-1}(0), 0) or Delta_0^+ = [0, T_+^{-1}(0))."""
    if not isinstance(m, DoublyIntermittent):
        raise WrongFamily(f"Delta_0 bases need a DoublyIntermittent map, got {type(m).__name__}")
    if side < 0:
        return BaseSet("delta0-", branch_inverse(m, 0.0, -1), 0.0)
    return BaseSet("delta0+", 0.0, branch_inverse(m, 0.0, +1))


def _sign_change_brackets(m: MapSpec, p: int, lo: float, hi: float) -> list[tuple[float, float]]:
    # T^p has at most 2^p laps; 64 grid cells per lap resolve every crossing
    n = max(4096, 64 * 2**p)
    xs = np.linspace(lo, hi, n + 1)
    ys = xs.copy()
    for _ in range(p):
        ys = 1.0 - m.a * ys * ys
    g = ys - xs
    out = []
    for i in range(n):
        if g[i] == 0.0 or g[i] * g[i + 1] < 0:
            out.append((float(xs[i]), float(xs[i + 1])))
    return out


def base_misiurewicz(m: MapSpec, max_p: int = 8, max_xi: float = 0.3) -> BaseSet:
    """Symmetric base (-xi, xi) around the critical point.

    Periods are scanned in increasing order; within the first period that
    yields candidates, the one closest to 0 wins. A candidate must be the
    point of its orbit nearest to 0, so no orbit point falls inside the base.
    """
    if not isinstance(m, QuadraticMis):
        raise WrongFamily(f"Misiurewicz bases need a QuadraticMis map, got {type(m).__name__}")
    for p in range(1, max_p + 1):
        found = []
        for a, b in _sign_change_brackets(m, p, 0.0, max_xi):
            try:
                z = find_periodic(m, p, (a, b))
            except (NotPrimePeriod, NoConvergence):
                continue
            if not 0.0 < z < max_xi:
                continue
            orbit_abs = [abs(iterate_n(m, z, q)) for q in range(1, p)]
            if all(v >= z for v in orbit_abs):
                found.append(z)
        if found:
            xi = min(found)
            return BaseSet("misiurewicz", -xi, xi, period=p, xi=xi)
    raise NoPeriodicPointFound(f"no admissible periodic point in (0, {max_xi}) with period <= {max_p}")


# ---------------------------------------------------------------------------
# first returns


def first_return(m: MapSpec, A: BaseSet, x: float, cap: int = DEFAULT_CAP) -> ReturnRecord:
    x = _check_point(m, x)
    r, y = K.first_return(m.code, m.packed, x, A.lo, A.hi, cap)
    if r < 0:
        raise ReturnCapExceeded(cap)
    return ReturnRecord(x, int(r), float(y))


def induced_orbit(m: MapSpec, A: BaseSet, x: float, q: int, cap: int = DEFAULT_CAP) -> list[ReturnRecord]:
    """q chained first-return records starting at x."""
    out = []
    for _ in range(q):
        rec = first_return(m, A, x, cap)
        out.append(rec)
        x = rec.image
    return out


def stratified(xs: np.ndarray, max_n: int | None) -> np.ndarray:
    """Evenly spaced subsample of a sorted array (deterministic)."""
    if max_n is None or xs.shape[0] <= max_n:
        return xs
    idx = np.linspace(0, xs.shape[0] - 1, max_n).round().astype(np.int64)
    return xs[idx]


def _sharded(fn, xs: np.ndarray, threads: int | None, shards: int = 16) -> np.ndarray:
    if xs.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    parts = np.array_split(xs, min(shards, xs.shape[0]))
    return np.concatenate(run_tasks(fn, parts, threads))


def return_times(m: MapSpec, A: BaseSet, xs: np.ndarray, cap: int = DEFAULT_CAP,
                 threads: int | None = None) -> np.ndarray:
    """First-return times for many starts; -1 marks a capped excursion."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return _sharded(lambda part: K.return_times(m.code, m.packed, part, A.lo, A.hi, cap), xs, threads)


# ---------------------------------------------------------------------------
# return-time tails


@dataclass(frozen=True, eq=False)
class TailCurve:
    t: np.ndarray
    tail: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: int
    censored: int
    method: str
    fit_range: tuple[int, int] | None = None
    loglog_slope: float | None = None
    loglin_slope: float | None = None
    loglin_r2: float | None = None

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n if self.n else 0.0

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [(int(t), float(a), float(b), float(c))
                for t, a, b, c in zip(self.t, self.tail, self.ci_lo, self.ci_hi)]

    def to_dict(self) -> dict:
        return {
            "method": self.method, "n": self.n, "censored": self.censored,
            "censored_fraction": self.censored_fraction,
            "fit_range": list(self.fit_range) if self.fit_range else None,
            "loglog_slope": self.loglog_slope, "loglin_slope": self.loglin_slope,
            "loglin_r2": self.loglin_r2,
        }


def wilson_interval(k: np.ndarray, n: int, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(k, dtype=np.float64)
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return np.maximum(centre - half, 0.0), np.minimum(centre + half, 1.0)


def loglog_slope(t: np.ndarray, tail: np.ndarray) -> float:
    keep = (tail > 0) & (t > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(t[keep]), np.log(tail[keep]), 1)[0])


def loglin_fit(t: np.ndarray, tail: np.ndarray) -> tuple[float, float]:
    """(slope, R^2) of log(tail) against t."""
    keep = tail > 0
    if keep.sum() < 3:
        return math.nan, math.nan
    x, y = t[keep].astype(np.float64), np.log(tail[keep])
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss = float(np.sum((y - y.mean()) ** 2))
    return float(coef[0]), (1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0)


def _finish_tail(t, tail, lo, hi, n, censored, method, fit_range) -> TailCurve:
    t = np.asarray(t, dtype=np.int64)
    if fit_range is None:
        sel = np.ones(t.shape[0], dtype=bool)
    else:
        sel = (t >= fit_range[0]) & (t <= fit_range[1])
    ll = loglog_slope(t[sel], tail[sel])
    ls, r2 = loglin_fit(t[sel], tail[sel])
    return TailCurve(t, tail, lo, hi, n, censored, method,
                     tuple(fit_range) if fit_range else None, ll, ls, r2)


def return_tail(m: MapSpec, A: BaseSet, meas: EmpiricalMeasure, t_grid: Sequence[int],
                fit_range: tuple[int, int] | None = None, cap: int = DEFAULT_CAP,
                max_starts: int | None = None, threads: int | None = None) -> TailCurve:
    """Empirical mu_A(r_A > t) from the measure samples that fall in A.

    Capped excursions count as r_A > cap and are reported as censored. The
    Wilson intervals treat samples as independent, which understates the
    uncertainty of a correlated Birkhoff sample.
    """
    xs = meas.slice_halfopen(A.lo, A.hi)
    if xs.shape[0] < MIN_BASE_SAMPLES:
        raise InsufficientBaseSamples(f"{xs.shape[0]} samples in A, need {MIN_BASE_SAMPLES}")
    xs = stratified(xs, max_starts)
    r = return_times(m, A, xs, cap, threads)
    censored = int(np.sum(r < 0))
    r = np.where(r < 0, cap + 1, r)
    r.sort()
    t = np.asarray(sorted(set(int(v) for v in t_grid)), dtype=np.int64)
    n = r.shape[0]
    k = n - np.searchsorted(r, t, "right")
    lo, hi = wilson_interval(k, n)
    return _finish_tail(t, k / n, lo, hi, n, censored, "empirical", fit_range)


def exact_geometric_tail(t_grid: Iterable[int], q: float) -> np.ndarray:
    return np.array([q**t for t in t_grid])


# -- semi-analytic tail for doubly intermittent maps ------------------------
#
# For x in Delta_0^- write y = T x. If y lies in Delta_n^+ it needs n steps
# to reach Delta_0^+, one more step lands at z in [-1, 0), and z in
# Delta_m^- needs m steps to reach Delta_0^-. Hence r = n + m + 2 and
#
#   {r > t} = union_n  Phi_n([-1, d_M)),   M = max(t - n - 1, 0),
#
# where Phi_n = T_-^{-1} o (T_+^{-1})^{n+1} and d_M are the Delta^- endpoints.
# Points near the neutral ends are carried as distances s = 1 + x and
# sigma = 1 - x so the deep cells keep full relative precision.

_LIN_W = 1e-7


class _DIGeometry:
    def __init__(self, m: DoublyIntermittent):
        self.m = m
        p = m.packed
        self.xl, self.xr = float(p[9]), float(p[10])
        self.y_xl = float(K.step(m.code, p, self.xl))  # T(xl): top of T(U_{-1})
        self.y_xr = float(K.step(m.code, p, self.xr))  # T(xr): bottom of T(U_{+1})

    def left_inv_s(self, s_y: float) -> float:
        """s-coordinate of T_-^{-1}(-1 + s_y)."""
        m = self.m
        if -1.0 + s_y <= self.y_xl:
            s = s_y
            for _ in range(100):
                f = s + m.b1 * s ** (1 + m.l1) - s_y
                s_new = s - f / (1 + m.b1 * (1 + m.l1) * s**m.l1)
                if not s_new < s:
                    break
                s = s_new
            return s
        return 1.0 + branch_inverse(m, -1.0 + s_y, -1)

    def right_inv_sigma(self, sig_y: float) -> float:
        """sigma-coordinate of T_+^{-1}(1 - sig_y)."""
        m = self.m
        if 1.0 - sig_y >= self.y_xr:
            s = sig_y
            for _ in range(100):
                f = s + m.b2 * s ** (1 + m.l2) - sig_y
                s_new = s - f / (1 + m.b2 * (1 + m.l2) * s**m.l2)
                if not s_new < s:
                    break
                s = s_new
            return s
        return 1.0 - branch_inverse(m, 1.0 - sig_y, +1)

    def right_inv_from_s(self, s_y: float) -> float:
        """T_+^{-1}(-1 + s_y) as a point of [0, 1)."""
        m = self.m
        if s_y <= m.a2 * m.iota**m.k2:
            return (s_y / m.a2) ** (1.0 / m.k2)
        return branch_inverse(m, -1.0 + s_y, +1)

    def left_inv_from_sigma(self, sig: float) -> float:
        """T_-^{-1}(1 - sig) as a point of [-1, 0)."""
        m = self.m
        if sig <= m.a1 * m.iota**m.k1:
            return -((sig / m.a1) ** (1.0 / m.k1))
        return branch_inverse(m, 1.0 - sig, -1)

    def dT_sigma(self, sig: float) -> float:
        """T'(1 - sig) on the right branch."""
        m = self.m
        if 1.0 - sig >= self.xr:
            return 1.0 + m.b2 * (1 + m.l2) * sig**m.l2
        return float(K.dstep(m.code, m.packed, 1.0 - sig))


class _BinMass:
    """Accumulates Lebesgue length per histogram bin."""

    def __init__(self, edges: np.ndarray):
        self.edges = edges
        self.L = np.zeros(edges.shape[0] - 1)

    def add(self, a: float, length: float):
        if length <= 0:
            return
        e = self.edges
        i = int(np.clip(np.searchsorted(e, a, "right") - 1, 0, self.L.shape[0] - 1))
        b = a + length
        if b <= e[i + 1] or i == self.L.shape[0] - 1:
            self.L[i] += length
            return
        j = int(np.clip(np.searchsorted(e, b, "right") - 1, 0, self.L.shape[0] - 1))
        self.L[i] += e[i + 1] - a
        self.L[i + 1:j] += np.diff(e)[i + 1:j]
        self.L[j] += b - e[j]


def _mirror(m: DoublyIntermittent) -> DoublyIntermittent:
    return DoublyIntermittent(l1=m.l2, l2=m.l1, k1=m.k2, k2=m.k1, a1=m.a2, a2=m.a1,
                              b1=m.b2, b2=m.b1, iota=m.iota)


def partition_tail(m: MapSpec, meas: EmpiricalMeasure, t_grid: Sequence[int], side: int = -1,
                   bins: int = 400, fit_range: tuple[int, int] | None = None) -> TailCurve:
    """mu_{Delta_0}(r > t) from the exact cell geometry and a histogram density.

    The set {r > t} inside Delta_0^- is assembled cell by cell from branch
    inverses; its mass is the integral of a histogram estimate of the
    conditional density on Delta_0^-. This reaches tails far below what a
    Monte Carlo sample can resolve. Intervals are +-2 standard errors of the
    histogram counts, treated as Poisson.
    """
    if not isinstance(m, DoublyIntermittent):
        raise WrongFamily("partition tails need a DoublyIntermittent map")
    samples = meas.samples
    if side > 0:
        m = _mirror(m)
        samples = -samples[::-1]
    geo = _DIGeometry(m)
    A = base_delta0(m, -1)
    lo_i = np.searchsorted(samples, A.lo, "left")
    hi_i = np.searchsorted(samples, A.hi, "left")
    xa = samples[lo_i:hi_i]
    if xa.shape[0] < MIN_BASE_SAMPLES:
        raise InsufficientBaseSamples(f"{xa.shape[0]} samples in Delta_0, need {MIN_BASE_SAMPLES}")
    edges = np.linspace(A.lo, A.hi, bins + 1)
    counts = np.histogram(xa, bins=edges)[0].astype(np.float64)
    n_a = float(xa.shape[0])
    width = np.diff(edges)

    t_vals = sorted(set(int(v) for v in t_grid))
    t_max = max(t_vals)
    # s_M = 1 + d_M, and w_M = T_+^{-1}(d_M) for M >= 1
    s = [1.0]
    for _ in range(t_max + 1):
        s.append(geo.left_inv_s(s[-1]))
    w = [geo.right_inv_from_s(sm) for sm in s]

    # chain from v = 0: sigma_n = 1 - e_n, base points x_n = Phi_n(-1),
    # and P_n = (T^{n+1})'(x_n) with the one-sided slope at 0+
    sig0 = [1.0]
    for _ in range(t_max + 1):
        sig0.append(geo.right_inv_sigma(sig0[-1]))
    x0 = [geo.left_inv_from_sigma(sg) for sg in sig0]
    P = []
    prod = 1.0
    for n in range(t_max + 1):
        if n >= 1:
            prod *= geo.dT_sigma(sig0[n])
        P.append(prod * float(K.dstep(m.code, m.packed, x0[n])))

    # direct chains from v = w_M, needed only while w_M is not tiny
    direct: dict[int, list[float]] = {}
    for M in range(1, t_max + 1):
        if w[M] < _LIN_W:
            break
        chain = [1.0 - w[M]]
        for _ in range(t_max - M):
            chain.append(geo.right_inv_sigma(chain[-1]))
        direct[M] = [geo.left_inv_from_sigma(sg) for sg in chain]

    def piece(n: int, M: int) -> tuple[float, float]:
        if M in direct:
            return x0[n], direct[M][n] - x0[n]
        return x0[n], w[M] / P[n]

    tails, var = [], []
    for t in t_vals:
        acc = _BinMass(edges)
        for n in range(0, t - 1):
            a, length = piece(n, t - n - 1)
            acc.add(a, length)
        if t - 1 <= t_max:
            a = x0[max(t - 1, 0)]
            acc.add(a, A.hi - a)
        coef = acc.L / (n_a * width)
        tails.append(float(np.sum(coef * counts)))
        var.append(float(np.sum(coef**2 * counts)))
    tail = np.minimum(np.array(tails), 1.0)
    se = np.sqrt(np.array(var))
    return _finish_tail(t_vals, tail, np.maximum(tail - 2 * se, 0.0), tail + 2 * se,
                        int(n_a), 0, "partition", fit_range)


def write_tail_csv(curve: TailCurve, fh: io.TextIOBase | None = None) -> str:
    buf = fh or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "tail", "ci_lo", "ci_hi"])
    for row in curve.rows():
        w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    return buf.getvalue() if fh is None else ""


# ---------------------------------------------------------------------------
# shadow sets


def shadow_query(m: MapSpec, A: BaseSet, B, x: float, cap: int = DEFAULT_CAP) -> ShadowQuery:
    x = _check_point(m, x)
    lag = K.shadow_lag(m.code, m.packed, x, A.lo, A.hi, B.lo, B.hi, cap)
    if lag == -2:
        raise ReturnCapExceeded(cap)
    return ShadowQuery(A, B, None if lag < 0 else int(lag))


def shadow_lags(m: MapSpec, A: BaseSet, B, xs: np.ndarray, cap: int = DEFAULT_CAP,
                threads: int | None = None) -> np.ndarray:
    """Shadow lag per start: >= 0 lag, -1 outside the shadow, -2 capped."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return _sharded(lambda part: K.shadow_lags(m.code, m.packed, part, A.lo, A.hi, B.lo, B.hi, cap),
                    xs, threads)


def base_first(m: MapSpec, A: BaseSet, B, xs: np.ndarray, cap: int = DEFAULT_CAP,
               threads: int | None = None) -> np.ndarray:
    """1 where r_A <= r_B, 0 where r_B < r_A, -2 capped."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return _sharded(
        lambda part: K.base_before_target(m.code, m.packed, part, A.lo, A.hi, B.lo, B.hi, cap),
        xs, threads)


@dataclass(frozen=True)
class ShadowEstimate:
    shadow_mass: float  # mu(B')
    target_mass: float  # mu(B)
    identity_rhs: float  # mu(B & {r_A <= r_B})
    base_mass: float  # mu(A)
    se_shadow: float
    se_rhs: float
    n_base: int
    n_target: int
    censored: int


def _binom_se(k: float, n: int, scale: float = 1.0) -> float:
    if n == 0:
        return math.nan
    p = k / n
    return scale * math.sqrt(max(p * (1 - p), 1.0 / n) / n)


def shadow_estimate(m: MapSpec, A: BaseSet, B, meas: EmpiricalMeasure, cap: int = DEFAULT_CAP,
                    max_starts: int | None = None, threads: int | None = None) -> ShadowEstimate:
    n = meas.n_samples
    xa = meas.slice_halfopen(A.lo, A.hi)
    xb = meas.slice_open(B.lo, B.hi)
    mu_a, mu_b = xa.shape[0] / n, xb.shape[0] / n
    xa_s = stratified(xa, max_starts)
    xb_s = stratified(xb, max_starts)
    lags = shadow_lags(m, A, B, xa_s, cap, threads)
    first = base_first(m, A, B, xb_s, cap, threads)
    k_sh = int(np.sum(lags >= 0))
    k_rhs = int(np.sum(first == 1))
    f_sh = k_sh / xa_s.shape[0] if xa_s.shape[0] else 0.0
    f_rhs = k_rhs / xb_s.shape[0] if xb_s.shape[0] else 0.0
    return ShadowEstimate(
        shadow_mass=mu_a * f_sh,
        target_mass=mu_b,
        identity_rhs=mu_b * f_rhs,
        base_mass=mu_a,
        se_shadow=_binom_se(k_sh, xa_s.shape[0], mu_a) if xa_s.shape[0] else 0.0,
        se_rhs=_binom_se(k_rhs, xb_s.shape[0], mu_b) if xb_s.shape[0] else 0.0,
        n_base=int(xa_s.shape[0]),
        n_target=int(xb_s.shape[0]),
        censored=int(np.sum(lags == -2) + np.sum(first == -2)),
    )


def shadow_mass(m: MapSpec, A: BaseSet, B, meas: EmpiricalMeasure, cap: int = DEFAULT_CAP,
                max_starts: int | None = None, threads: int | None = None) -> float:
    """mu-hat(B'), the fraction of all samples that lie in the shadow of B."""
    return shadow_estimate(m, A, B, meas, cap, max_starts, threads).shadow_mass


def identity_check(m: MapSpec, A: BaseSet, B, meas: EmpiricalMeasure, cap: int = DEFAULT_CAP,
                   max_starts: int | None = None, threads: int | None = None) -> tuple[float, float]:
    """(mu-hat(B'), mu-hat(B & {r_A <= r_B})); equal in law."""
    est = shadow_estimate(m, A, B, meas, cap, max_starts, threads)
    return est.shadow_mass, est.identity_rhs


@dataclass(frozen=True)
class HypDiagnostics:
    h1: float
    h2: float
    eps: float
    shadow_mass: float
    n_shadow: int
    n_target: int


def hyp_diagnostics(m: MapSpec, A: BaseSet, B, meas: EmpiricalMeasure, eps: float = 0.01,
                    cap: int = DEFAULT_CAP, max_starts: int | None = None,
                    threads: int | None = None) -> HypDiagnostics:
    """h1 = mu_{B'}(mu(B') * lag >= eps) and h2 = mu_B(r_B < r_A).

    Both must tend to 0 along a shrinking schedule for the equivalence of
    original and induced processes to apply.
    """
    n = meas.n_samples
    xa = meas.slice_halfopen(A.lo, A.hi)
    xb = meas.slice_open(B.lo, B.hi)
    lags = shadow_lags(m, A, B, stratified(xa, max_starts), cap, threads)
    in_shadow = lags[lags >= 0]
    mu_shadow = (xa.shape[0] / n) * (in_shadow.shape[0] / max(lags.shape[0], 1))
    h1 = float(np.mean(mu_shadow * in_shadow >= eps)) if in_shadow.shape[0] else 0.0
    first = base_first(m, A, B, stratified(xb, max_starts), cap, threads)
    decided = first[first >= 0]
    h2 = float(np.mean(decided == 0)) if decided.shape[0] else 0.0
    return HypDiagnostics(h1, h2, eps, mu_shadow, int(in_shadow.shape[0]), int(decided.shape[0]))
