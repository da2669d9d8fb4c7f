"""Interval map families: quadratic Misiurewicz maps, doubly intermittent
maps with neutral endpoints, and full-branch piecewise-linear maps.

Each family is an immutable dataclass. The module-level functions
(:func:`evaluate`, :func:`deriv`, :func:`iterate`, ...) are the public
operations; they accept any of the three families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import (
    AtBranchBoundary,
    BetaTooLarge,
    NoConvergence,
    NonFiniteInput,
    NoSignChange,
    NotPrimePeriod,
    OutOfDomain,
    RootNotBracketed,
    WrongFamily,
)

DOMAIN_TOL = 1e-12
JUNCTION_TOL = 1e-12
PERIODIC_TOL = 1e-13
PRIME_PERIOD_TOL = 1e-8


@dataclass(frozen=True)
class QuadraticMis:
    """T(x) = 1 - a x^2 on [-1, 1]."""

    a: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.a <= 2.0):
            raise ValueError(f"a must lie in (0, 2], got {self.a}")

    code = K.QUAD
    interval = (-1.0, 1.0)
    junctions = ()

    @property
    def packed(self) -> np.ndarray:
        return np.array([self.a], dtype=np.float64)

    @property
    def map_id(self) -> str:
        return f"quadratic(a={self.a!r})"


def _hermite(x0, y0, m0, x1, y1, m1):
    """Cubic coefficients in u = x - x0 matching values and slopes."""
    h = x1 - x0
    delta = (y1 - y0) / h
    c2 = (3.0 * delta - 2.0 * m0 - m1) / h
    c3 = (m0 + m1 - 2.0 * delta) / (h * h)
    return (y0, m0, c2, c3), h


def _min_cubic_slope(c, h):
    _, c1, c2, c3 = c
    cands = [0.0, h]
    if c3 != 0.0:
        u = -c2 / (3.0 * c3)
        if 0.0 < u < h:
            cands.append(u)
    return min(c1 + 2.0 * c2 * u + 3.0 * c3 * u * u for u in cands)


@dataclass(frozen=True)
class DoublyIntermittent:
    """Full-branch map of [-1, 1] with neutral fixed points at both ends.

    Near -1:   x + b1 (1+x)^(1+l1)      near 0-: 1 - a1 |x|^k1
    Near 0+:  -1 + a2 x^k2              near 1:  x - b2 (1-x)^(1+l2)

    ``iota`` is the half-width of the neighbourhoods of 0. The endpoint
    neighbourhoods are the images of the opposite ones, U_{-1} = T(U_{0+})
    and U_{+1} = T(U_{0-}). In between, each branch is a C^1 monotone cubic
    Hermite interpolant. ``l_i = 0`` gives the linear endpoint
    -1 + (1+b1)(1+x) (correction term identically zero).
    """

    l1: float
    l2: float
    k1: float = 1.0
    k2: float = 1.0
    a1: float = 4.0
    a2: float = 4.0
    b1: float = 1.0
    b2: float = 1.0
    iota: float = 0.1
    _packed: np.ndarray = field(init=False, repr=False, compare=False)

    code = K.DOUBLY
    interval = (-1.0, 1.0)
    junctions = (0.0,)

    def __post_init__(self):
        if min(self.l1, self.l2) < 0:
            raise ValueError("l1, l2 must be >= 0")
        if min(self.k1, self.k2, self.a1, self.a2, self.b1, self.b2) <= 0:
            raise ValueError("k_i, a_i, b_i must be > 0")
        if not 0.0 < self.iota < 0.5:
            raise ValueError("iota must lie in (0, 0.5)")
        xl = -1.0 + self.a2 * self.iota**self.k2
        xr = 1.0 - self.a1 * self.iota**self.k1
        if not (xl < -self.iota and xr > self.iota):
            raise ValueError("endpoint neighbourhoods overlap the neighbourhoods of 0")
        yl0 = xl + self.b1 * (1.0 + xl) ** (1.0 + self.l1)
        ml0 = 1.0 + self.b1 * (1.0 + self.l1) * (1.0 + xl) ** self.l1
        yl1 = 1.0 - self.a1 * self.iota**self.k1
        ml1 = self.a1 * self.k1 * self.iota ** (self.k1 - 1.0)
        yr0 = -1.0 + self.a2 * self.iota**self.k2
        mr0 = self.a2 * self.k2 * self.iota ** (self.k2 - 1.0)
        yr1 = xr - self.b2 * (1.0 - xr) ** (1.0 + self.l2)
        mr1 = 1.0 + self.b2 * (1.0 + self.l2) * (1.0 - xr) ** self.l2
        cl, hl = _hermite(xl, yl0, ml0, -self.iota, yl1, ml1)
        cr, hr = _hermite(self.iota, yr0, mr0, xr, yr1, mr1)
        if yl1 <= yl0 or yr1 <= yr0:
            raise ValueError("branch values are not increasing across the glue region")
        if _min_cubic_slope(cl, hl) <= 0 or _min_cubic_slope(cr, hr) <= 0:
            raise ValueError("cubic glue is not monotone for these parameters")
        packed = np.array(
            [self.l1, self.l2, self.k1, self.k2, self.a1, self.a2, self.b1, self.b2,
             self.iota, xl, xr, *cl, *cr],
            dtype=np.float64,
        )
        packed.setflags(write=False)
        object.__setattr__(self, "_packed", packed)

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    @property
    def beta(self) -> float:
        return max(self.k1 * self.l1, self.k2 * self.l2)

    @property
    def regions(self) -> dict[str, tuple[float, float]]:
        p = self._packed
        return {
            "U-1": (-1.0, p[9]),
            "glue-": (p[9], -self.iota),
            "U0-": (-self.iota, 0.0),
            "U0+": (0.0, self.iota),
            "glue+": (self.iota, p[10]),
            "U+1": (p[10], 1.0),
        }

    @property
    def map_id(self) -> str:
        return (
            f"doubly_intermittent(l1={self.l1!r},l2={self.l2!r},k1={self.k1!r},k2={self.k2!r},"
            f"a1={self.a1!r},a2={self.a2!r},b1={self.b1!r},b2={self.b2!r},iota={self.iota!r})"
        )


@dataclass(frozen=True)
class PiecewiseLinearMarkov:
    """Full-branch piecewise-linear map of [0, 1].

    Branch i maps [breakpoints[i], breakpoints[i+1]) affinely onto [0, 1]
    with the given slope (increasing if positive). Lebesgue measure is
    invariant, and the branch index sequence of a Lebesgue-typical point is
    i.i.d. with P(i) = 1/|slope_i|.
    """

    breakpoints: tuple
    slopes: tuple
    _packed: np.ndarray = field(init=False, repr=False, compare=False)

    code = K.PLIN
    interval = (0.0, 1.0)

    def __post_init__(self):
        bp = tuple(Fraction(b).limit_denominator(10**12) if not isinstance(b, Fraction) else b
                   for b in self.breakpoints)
        sl = tuple(Fraction(s).limit_denominator(10**12) if not isinstance(s, Fraction) else s
                   for s in self.slopes)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        if len(bp) != len(sl) + 1 or bp[0] != 0 or bp[-1] != 1:
            raise ValueError("breakpoints must run from 0 to 1 with one more entry than slopes")
        for i, s in enumerate(sl):
            if abs(s) <= 1:
                raise ValueError("all |slopes| must exceed 1")
            if bp[i + 1] - bp[i] != 1 / abs(s):
                raise ValueError(f"branch {i} is not full: length must equal 1/|slope|")
        bases = [0.0 if s > 0 else 1.0 for s in sl]
        packed = np.array(
            [len(sl), *map(float, bp), *map(float, sl), *bases], dtype=np.float64
        )
        packed.setflags(write=False)
        object.__setattr__(self, "_packed", packed)

    @classmethod
    def doubling(cls) -> "PiecewiseLinearMarkov":
        return cls((0, Fraction(1, 2), 1), (2, 2))

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    @property
    def junctions(self) -> tuple[float, ...]:
        return tuple(float(b) for b in self.breakpoints[1:-1])

    @property
    def branch_probs(self) -> np.ndarray:
        return np.array([1.0 / abs(float(s)) for s in self.slopes])

    def branch_of(self, x):
        for i in range(len(self.slopes)):
            if x < self.breakpoints[i + 1]:
                return i
        return len(self.slopes) - 1

    def exact_eval(self, x: Fraction) -> Fraction:
        """Rational evaluation, used by the exact oracle."""
        i = self.branch_of(x)
        s = self.slopes[i]
        base = Fraction(0) if s > 0 else Fraction(1)
        return base + s * (x - self.breakpoints[i])

    @property
    def map_id(self) -> str:
        return f"piecewise_linear(bp={[str(b) for b in self.breakpoints]},slopes={[str(s) for s in self.slopes]})"


MapSpec = Union[QuadraticMis, DoublyIntermittent, PiecewiseLinearMarkov]


def _check_point(m: MapSpec, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise NonFiniteInput(f"x={x!r} is not finite")
    lo, hi = m.interval
    if x < lo - DOMAIN_TOL or x > hi + DOMAIN_TOL:
        raise OutOfDomain(f"x={x!r} outside {m.interval}")
    return min(max(x, lo), hi)


def evaluate(m: MapSpec, x: float) -> float:
    """T(x)."""
    return float(K.step(m.code, m.packed, _check_point(m, x)))


def deriv(m: MapSpec, x: float) -> float:
    """T'(x) of the active branch; refuses to answer at branch junctions."""
    x = _check_point(m, x)
    for j in m.junctions:
        if abs(x - j) <= JUNCTION_TOL:
            raise AtBranchBoundary(x)
    return float(K.dstep(m.code, m.packed, x))


def iterate(m: MapSpec, x0: float, n: int) -> Iterator[float]:
    """Yield x0, T x0, ..., T^n x0 lazily."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = _check_point(m, x0)
    yield x
    for _ in range(n):
        x = evaluate(m, x)
        yield x


def orbit(m: MapSpec, x0: float, n: int) -> np.ndarray:
    return np.fromiter(iterate(m, x0, n), dtype=np.float64, count=n + 1)


def deriv_along_orbit(m: MapSpec, x: float, n: int) -> float:
    """(T^n)'(x) as the product of T' along the orbit."""
    prod = 1.0
    y = _check_point(m, x)
    for i in range(n):
        try:
            prod *= deriv(m, y)
        except AtBranchBoundary as exc:
            raise AtBranchBoundary(exc.x, index=i) from None
        y = evaluate(m, y)
    return prod


def iterate_n(m: MapSpec, x: float, n: int) -> float:
    y = _check_point(m, x)
    for _ in range(n):
        y = float(K.step(m.code, m.packed, y))
    return y


def find_periodic(m: MapSpec, p: int, bracket: tuple[float, float]) -> float:
    """Point of prime period p inside ``bracket``, by bisection then Newton.

    The bracket must see a sign change of T^p(x) - x. The result satisfies
    |T^p(z) - z| <= 1e-13 and |T^q(z) - z| > 1e-8 for every q < p.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    lo, hi = (_check_point(m, b) for b in bracket)

    def g(x):
        return iterate_n(m, x, p) - x

    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        z = lo
    elif ghi == 0.0:
        z = hi
    else:
        if glo * ghi > 0:
            raise NoSignChange(f"T^{p}(x) - x does not change sign on [{lo}, {hi}]")
        a, b, ga = lo, hi, glo
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            gm = g(mid)
            if gm == 0.0:
                a = b = mid
                break
            if (gm < 0) == (ga < 0):
                a, ga = mid, gm
            else:
                b = mid
        z = 0.5 * (a + b)
        # Newton polish, kept only while it improves the residual
        for _ in range(8):
            try:
                d = deriv_along_orbit(m, z, p) - 1.0
            except AtBranchBoundary:
                break
            if d == 0.0:
                break
            z_new = z - g(z) / d
            if not (lo <= z_new <= hi) or abs(g(z_new)) >= abs(g(z)):
                break
            z = z_new
    if abs(g(z)) > PERIODIC_TOL:
        raise NoConvergence(
            f"|T^{p}(z) - z| = {abs(g(z)):.3e} at z={z!r}; bracket may straddle a discontinuity"
        )
    for q in range(1, p):
        if abs(iterate_n(m, z, q) - z) <= PRIME_PERIOD_TOL:
            raise NotPrimePeriod(f"z={z!r} has period {q} < {p}")
    return z


def is_periodic(m: MapSpec, x: float, max_p: int, tol: float = PRIME_PERIOD_TOL) -> int | None:
    """Smallest q <= max_p with |T^q x - x| <= tol, else None."""
    y = _check_point(m, x)
    for q in range(1, max_p + 1):
        y = float(K.step(m.code, m.packed, y))
        if abs(y - x) <= tol:
            return q
    return None


# ---------------------------------------------------------------------------
# doubly intermittent structure


def _require_doubly(m) -> DoublyIntermittent:
    if not isinstance(m, DoublyIntermittent):
        raise WrongFamily(f"expected DoublyIntermittent, got {type(m).__name__}")
    return m


def branch_inverse(m: DoublyIntermittent, y: float, side: int) -> float:
    """Preimage of y under the left (side=-1) or right (side=+1) branch."""
    _require_doubly(m)
    if not -1.0 <= y <= 1.0:
        raise RootNotBracketed(f"y={y!r} outside [-1, 1]")
    a, b = (-1.0, 0.0) if side < 0 else (0.0, 1.0)
    f = (lambda x: float(K.step(m.code, m.packed, x)))
    if side < 0:
        # the left branch is evaluated on [-1, 0); T(0-) = 1
        if y >= 1.0:
            return 0.0
    else:
        if y <= -1.0:
            return 0.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if f(mid) < y:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class ValidationReport:
    beta: float
    lambda_hat: float
    Delta_minus: tuple[float, ...]  # d_0=0 > d_1 > ... ; Delta_n^- = [d_{n+1}, d_n)
    Delta_plus: tuple[float, ...]  # e_0=0 < e_1 < ... ; Delta_n^+ = (e_n, e_{n+1}]
    delta_minus: tuple[float, ...]  # left endpoints of delta_n^- = T_-^{-1}(Delta_n^+)
    delta_plus: tuple[float, ...]  # right endpoints of delta_n^+ = T_+^{-1}(Delta_n^-)
    n_minus: int | None
    n_plus: int | None
    interior_fixed_points: bool
    passed: bool


def validate_doubly_intermittent(m: MapSpec, depth: int = 20, samples_per_cell: int = 64) -> ValidationReport:
    """Enumerate the Delta/delta partitions and check expansion on them.

    Cells are indexed so that T maps delta_n^- onto Delta_n^+, hence
    T^{n+1} carries delta_n^- onto Delta_0^+; expansion is checked for that
    composite, for n up to min(n_-, depth) (and symmetrically on the right).
    """
    m = _require_doubly(m)
    beta = m.beta
    if beta >= 1:
        raise BetaTooLarge(f"beta = {beta} >= 1")
    d = [0.0]
    e = [0.0]
    for _ in range(depth + 1):
        d.append(branch_inverse(m, d[-1], -1))
        e.append(branch_inverse(m, e[-1], +1))
    dm = [branch_inverse(m, e[n], -1) for n in range(depth + 2)]
    dp = [branch_inverse(m, d[n], +1) for n in range(depth + 2)]

    def first_inside(ends, inside):
        for n in range(depth + 1):
            if inside(ends[n]):
                return n
        return None

    n_minus = first_inside(dm, lambda left: left >= -m.iota)
    n_plus = first_inside(dp, lambda right: right <= m.iota)

    lam = math.inf
    for side, cells, nmax in ((-1, dm, n_minus), (+1, dp, n_plus)):
        top = depth if nmax is None else min(nmax, depth)
        for n in range(top + 1):
            a, b = sorted((cells[n], cells[n + 1]))
            for x in np.linspace(a, b, samples_per_cell + 2)[1:-1]:
                try:
                    lam = min(lam, abs(deriv_along_orbit(m, float(x), n + 1)))
                except AtBranchBoundary:
                    continue

    xs = np.linspace(-1.0, 1.0, 200_001)[1:-1]
    xs = xs[np.abs(xs) > 1e-9]
    ys = np.array([K.step(m.code, m.packed, x) for x in xs])
    left = xs < 0
    interior_fixed = bool(np.any(ys[left] <= xs[left]) or np.any(ys[~left] >= xs[~left]))
    passed = beta < 1 and lam > 1 and not interior_fixed
    return ValidationReport(
        beta=beta,
        lambda_hat=float(lam),
        Delta_minus=tuple(d),
        Delta_plus=tuple(e),
        delta_minus=tuple(dm),
        delta_plus=tuple(dp),
        n_minus=n_minus,
        n_plus=n_plus,
        interior_fixed_points=interior_fixed,
        passed=passed,
    )


def map_from_config(cfg: dict) -> MapSpec:
    """Build a map from a config table ``{family = ..., <params>}``."""
    cfg = dict(cfg)
    family = cfg.pop("family")
    if family == "quadratic":
        return QuadraticMis(**cfg)
    if family == "doubly_intermittent":
        return DoublyIntermittent(**cfg)
    if family == "piecewise_linear":
        if cfg.get("preset") == "doubling":
            return PiecewiseLinearMarkov.doubling()
        return PiecewiseLinearMarkov(
            tuple(Fraction(str(b)) for b in cfg["breakpoints"]),
            tuple(Fraction(str(s)) for s in cfg["slopes"]),
        )
    raise ValueError(f"unknown map family {family!r}")


def map_to_config(m: MapSpec) -> dict:
    if isinstance(m, QuadraticMis):
        return {"family": "quadratic", "a": m.a}
    if isinstance(m, DoublyIntermittent):
        return {"family": "doubly_intermittent", "l1": m.l1, "l2": m.l2, "k1": m.k1,
                "k2": m.k2, "a1": m.a1, "a2": m.a2, "b1": m.b1, "b2": m.b2, "iota": m.iota}
    return {"family": "piecewise_linear", "breakpoints": [str(b) for b in m.breakpoints],
            "slopes": [str(s) for s in m.slopes]}


def as_points(xs: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(xs, dtype=np.float64)
