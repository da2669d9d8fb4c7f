"""Exact ground truth for full-branch piecewise-linear maps.

Under Lebesgue measure the branch sequence of such a map is i.i.d. with
P(branch s) = 1/|slope_s|. A depth-L cylinder [w_0 ... w_{L-1}] is the set of
points whose first L branches are w, and the distribution of T^k x over
depth-L cylinders evolves by the shift

    v'[w_1 ... w_L] = (sum over w_0 of v[w_0 ... w_{L-1}]) * p[w_L],

which is the row-stochastic transition matrix of the cylinder chain applied
implicitly. Killing mass on a target set between shifts gives taboo
(first-passage) probabilities. State vectors are indexed by the integer
whose base-b digits are w_0 (most significant) ... w_{L-1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import DepthInsufficient, NotPeriodic, TargetNotCylinderAligned
from .maps import PiecewiseLinearMarkov

Word = tuple[int, ...]


_NEGLIGIBLE = 1e-18


@njit(cache=True, nogil=True)
def _shift(v, p, u):
    b = p.shape[0]
    m = u.shape[0]
    for j in range(m):
        u[j] = 0.0
    for i in range(b):
        off = i * m
        for j in range(m):
            u[j] += v[off + j]
    for j in range(m):
        uj = u[j]
        for s in range(b):
            v[j * b + s] = uj * p[s]


@njit(cache=True, nogil=True)
def _collect(v, mask):
    """Sum and zero the entries of v selected by mask."""
    tot = 0.0
    for i in range(v.shape[0]):
        if mask[i]:
            tot += v[i]
            v[i] = 0.0
    return tot


@njit(cache=True, nogil=True)
def _shadow_forward(v, p, mask_a, mask_e, steps):
    """Mass of A visiting E strictly before returning to A (time 0 included)."""
    u = np.empty(v.shape[0] // p.shape[0])
    caught = _collect(v, mask_e)
    for k in range(steps):
        _shift(v, p, u)
        _collect(v, mask_a)
        caught += _collect(v, mask_e)
        if k % 16 == 15 and v.sum() < _NEGLIGIBLE:
            break
    return caught, v.sum()


@njit(cache=True, nogil=True)
def _base_first(v, p, mask_a, mask_e, steps):
    """Mass of E entering A no later than re-entering E (hitting times >= 1)."""
    u = np.empty(v.shape[0] // p.shape[0])
    got = 0.0
    for k in range(steps):
        _shift(v, p, u)
        got += _collect(v, mask_a)
        _collect(v, mask_e)
        if k % 16 == 15 and v.sum() < _NEGLIGIBLE:
            break
    return got, v.sum()


@dataclass(frozen=True, eq=False)
class CylinderSet:
    """A finite union of cylinders, stored as words."""

    words: tuple[Word, ...]

    @property
    def depth(self) -> int:
        return max((len(w) for w in self.words), default=0)


class SymbolicSystem:
    """Cylinder tree of a full-branch linear map up to a maximal depth."""

    def __init__(self, m: PiecewiseLinearMarkov, depth: int = 20):
        if not isinstance(m, PiecewiseLinearMarkov):
            raise TypeError("the oracle needs a PiecewiseLinearMarkov map")
        self.map = m
        self.depth = int(depth)
        self.base = len(m.slopes)
        self.p_exact = tuple(1 / abs(s) for s in m.slopes)
        self.p = np.array([float(q) for q in self.p_exact])

    # -- cylinders ---------------------------------------------------------

    def _check_word(self, w: Sequence[int]) -> Word:
        w = tuple(int(s) for s in w)
        if len(w) > self.depth:
            raise TargetNotCylinderAligned(f"word of length {len(w)} exceeds depth {self.depth}")
        if any(not 0 <= s < self.base for s in w):
            raise ValueError(f"symbols must lie in 0..{self.base - 1}")
        return w

    def cylinder(self, *words: Sequence[int]) -> CylinderSet:
        return CylinderSet(tuple(self._check_word(w) for w in words))

    def word_interval(self, w: Sequence[int]) -> tuple[Fraction, Fraction]:
        """[lo, hi) of the cylinder, exact."""
        m = self.map
        lo, hi = Fraction(0), Fraction(1)
        for s in reversed(tuple(w)):
            slope = m.slopes[s]
            base = Fraction(0) if slope > 0 else Fraction(1)
            a = m.breakpoints[s] + (lo - base) / slope
            b = m.breakpoints[s] + (hi - base) / slope
            lo, hi = min(a, b), max(a, b)
        return lo, hi

    def word_measure(self, w: Sequence[int]) -> Fraction:
        out = Fraction(1)
        for s in w:
            out *= self.p_exact[s]
        return out

    def measure(self, cs: CylinderSet) -> float:
        return float(self.weights(cs.depth)[self.mask(cs, cs.depth)].sum())

    def from_interval(self, lo, hi) -> CylinderSet:
        """Minimal cylinder cover of [lo, hi); fails unless it is exact at the tree depth."""
        lo, hi = Fraction(lo), Fraction(hi)
        words: list[Word] = []

        def visit(w: Word):
            a, b = self.word_interval(w)
            if b <= lo or a >= hi:
                return
            if lo <= a and b <= hi:
                words.append(w)
                return
            if len(w) == self.depth:
                raise TargetNotCylinderAligned(f"[{lo}, {hi}) is not a union of depth-{self.depth} cylinders")
            for s in range(self.base):
                visit(w + (s,))

        visit(())
        words.sort(key=lambda w: self.word_interval(w)[0])
        return CylinderSet(tuple(words))

    def symbols(self, x: Fraction, n: int) -> list[int]:
        """First n branch indices of the exact orbit of x."""
        out = []
        x = Fraction(x)
        for _ in range(n):
            out.append(self.map.branch_of(x))
            x = self.map.exact_eval(x)
        return out

    # -- state vectors -----------------------------------------------------

    def weights(self, L: int) -> np.ndarray:
        """Measure of every depth-L cylinder."""
        v = np.ones(1)
        for _ in range(L):
            v = np.multiply.outer(v, self.p).ravel()
        return v

    def mask(self, cs: CylinderSet, L: int) -> np.ndarray:
        if cs.depth > L:
            raise ValueError("working depth below the set's depth")
        out = np.zeros(self.base**L, dtype=np.bool_)
        for w in cs.words:
            code = 0
            for s in w:
                code = code * self.base + s
            span = self.base ** (L - len(w))
            out[code * span:(code + 1) * span] = True
        return out

    def transition_matrix(self, L: int | None = None) -> sp.csr_matrix:
        """Row-stochastic matrix of the depth-L cylinder chain."""
        L = self.depth if L is None else L
        b = self.base
        n = b**L
        rows = np.repeat(np.arange(n), b)
        cols = ((np.arange(n) % (n // b)) * b)[:, None] + np.arange(b)[None, :]
        data = np.tile(self.p, n)
        return sp.csr_matrix((data, (rows, cols.ravel())), shape=(n, n))

    def step(self, v: np.ndarray) -> np.ndarray:
        """One application of the transition matrix to a row distribution."""
        out = np.array(v, dtype=np.float64, copy=True)
        _shift(out, self.p, np.empty(out.shape[0] // self.base))
        return out


def exact_hitting_distribution(sys: SymbolicSystem, target: CylinderSet, t_max: int,
                               start: CylinderSet | None = None) -> np.ndarray:
    """P(r_target = t) for t = 1..t_max (index t-1), from mu or mu restricted to ``start``."""
    L = max(target.depth, start.depth if start else 0, 1)
    v = sys.weights(L)
    if start is not None:
        v = np.where(sys.mask(start, L), v, 0.0)
        v /= v.sum()
    mask = sys.mask(target, L)
    u = np.empty(v.shape[0] // sys.base)
    out = np.empty(t_max)
    for t in range(t_max):
        _shift(v, sys.p, u)
        out[t] = _collect(v, mask)
    return out


def exact_return_tail(sys: SymbolicSystem, A: CylinderSet, t_max: int) -> np.ndarray:
    """mu_A(r_A > t) for t = 0..t_max."""
    dist = exact_hitting_distribution(sys, A, t_max, start=A)
    return np.concatenate(([1.0], 1.0 - np.cumsum(dist)))


GAP_TOL = 1e-10


def exact_shadow_measure(sys: SymbolicSystem, A: CylinderSet, E: CylinderSet,
                         depth: int = 400) -> tuple[float, float]:
    """(mu(E'), mu(E & {r_A <= r_E})) by two independent taboo computations.

    ``depth`` is the number of time steps followed; mass still undecided
    afterwards bounds the truncation error and must stay below 1e-10.
    """
    L = max(A.depth, E.depth, 1)
    w = sys.weights(L)
    ma, me = sys.mask(A, L), sys.mask(E, L)
    if not w[me].sum() > 0:
        return 0.0, 0.0
    lhs, gap1 = _shadow_forward(np.where(ma, w, 0.0), sys.p, ma, me, depth)
    rhs, gap2 = _base_first(np.where(me, w, 0.0), sys.p, ma, me, depth)
    if max(gap1, gap2) > GAP_TOL:
        raise DepthInsufficient(f"undecided mass {max(gap1, gap2):.3e} after {depth} steps")
    return float(lhs), float(rhs)


def theta_from_slopes(slopes: Iterable) -> Fraction | float:
    """1 - |product of slopes|^{-1}; a neutral product gives 0."""
    prod = Fraction(1)
    for s in slopes:
        prod *= Fraction(s)
    if abs(prod) == 1:
        return Fraction(0)
    return 1 - 1 / abs(prod)


def exact_theta_linear(sys: SymbolicSystem, zeta, p: int) -> Fraction:
    """Extremal index at a periodic point of a linear map, in exact arithmetic."""
    m = sys.map
    z = Fraction(zeta)
    x = z
    slopes = []
    for _ in range(p):
        slopes.append(m.slopes[m.branch_of(x)])
        x = m.exact_eval(x)
    if x != z:
        raise NotPeriodic(f"T^{p}({z}) = {x} != {z}")
    return theta_from_slopes(slopes)


def symbolic_hits(sys: SymbolicSystem, target: CylinderSet, x0, horizon: int) -> list[int]:
    """Indices i <= horizon whose exact symbol window starts a target word."""
    seq = sys.symbols(Fraction(x0), horizon + target.depth)
    out = []
    for i in range(horizon + 1):
        if any(tuple(seq[i:i + len(w)]) == w for w in target.words):
            out.append(i)
    return out


def random_cylinder_pairs(sys: SymbolicSystem, n: int, rng: np.random.Generator,
                          max_base_len: int = 3) -> list[tuple[CylinderSet, CylinderSet]]:
    """Random (A, E): A one or two short cylinders, E a cylinder of length up to the tree depth."""
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 3))
        a_words = set()
        while len(a_words) < k:
            la = int(rng.integers(1, max_base_len + 1))
            a_words.add(tuple(int(s) for s in rng.integers(0, sys.base, la)))
        # drop words nested in others so the union is a clean cover
        a_words = {w for w in a_words if not any(v != w and w[:len(v)] == v for v in a_words)}
        le = int(rng.integers(1, sys.depth + 1))
        e_word = tuple(int(s) for s in rng.integers(0, sys.base, le))
        out.append((CylinderSet(tuple(sorted(a_words))), CylinderSet((e_word,))))
    return out
