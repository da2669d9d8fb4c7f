"""Chunked, seed-reproducible orbit generation.

Long runs are split into a fixed number of independent orbit chunks. Each
chunk gets its own generator spawned from the master seed, so results do
not depend on how many worker threads execute the chunks.

Piecewise-linear maps are not iterated forward (doubling-type maps shift
all mantissa bits out in ~50 steps). Their chunks are built backwards from
a uniform end point through randomly chosen inverse branches, which yields
an exact T-orbit started from Lebesgue measure.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

from . import _kernels as K
from .maps import MapSpec, PiecewiseLinearMarkov

T = TypeVar("T")

RESERVE_POINTS = 256
PL_BLOCK = 1 << 20


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def default_threads() -> int:
    return os.cpu_count() or 1


def run_tasks(fn: Callable[..., T], args: Sequence, threads: int | None = None) -> list[T]:
    """Map ``fn`` over ``args`` on a thread pool, keeping input order."""
    threads = threads or default_threads()
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, args))


class OrbitStarved(RuntimeError):
    pass


def _start_and_reserve(m: MapSpec, rng: np.random.Generator):
    lo, hi = m.interval
    x0 = float(rng.uniform(lo, hi))
    reserve = rng.uniform(lo, hi, RESERVE_POINTS)
    return x0, reserve


def _check_state(state):
    if state[1]:
        raise OrbitStarved("orbit fell onto a fixed point more often than the reserve allows")


def _pl_block(m: PiecewiseLinearMarkov, n: int, x_end: float, rng) -> np.ndarray:
    """Exact orbit segment of n+1 points ending at x_end."""
    symbols = rng.choice(len(m.slopes), size=n, p=m.branch_probs).astype(np.int64)
    out = np.empty(n + 1, dtype=np.float64)
    out[n] = x_end
    K.pl_backward_orbit(m.packed, symbols, x_end, out[:n])
    return out


def orbit_chunk(m: MapSpec, n: int, burn_in: int, rng: np.random.Generator, thin: int = 1):
    """Record n orbit points (every ``thin``-th iterate after burn-in).

    Returns (points, restarts).
    """
    if isinstance(m, PiecewiseLinearMarkov):
        total = (n - 1) * thin + 1
        pts = _pl_block(m, total - 1, float(rng.uniform()), rng)
        return pts[::thin].copy(), 0
    x0, reserve = _start_and_reserve(m, rng)
    state = np.zeros(2, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    K.orbit_fill(m.code, m.packed, x0, burn_in, thin, out, reserve, state)
    _check_state(state)
    return out, int(state[0])


def hit_chunk(m: MapSpec, lo: float, hi: float, n: int, burn_in: int, rng: np.random.Generator):
    """Indices i < n (after burn-in) with lo < T^i x < hi, plus restart count."""
    if isinstance(m, PiecewiseLinearMarkov):
        pieces = []
        x_end = float(rng.uniform())
        # blocks are generated from the end of the orbit backwards
        stop = n
        while stop > 0:
            start = max(0, stop - PL_BLOCK)
            seg = _pl_block(m, stop - start, x_end, rng)
            idx = K.hits_in_array(seg[:-1], lo, hi)
            pieces.append(idx + start)
            x_end = float(seg[0])
            stop = start
        pieces.reverse()
        return (np.concatenate(pieces) if pieces else np.empty(0, np.int64)), 0
    x0, reserve = _start_and_reserve(m, rng)
    state = np.zeros(2, dtype=np.int64)
    idx = K.scan_hits(m.code, m.packed, x0, burn_in, n, lo, hi, reserve, state)
    _check_state(state)
    return idx, int(state[0])


def stationary_points(m: MapSpec, n: int, burn_in: int, rng: np.random.Generator) -> np.ndarray:
    """n approximately independent mu-distributed points (one short orbit each)."""
    if isinstance(m, PiecewiseLinearMarkov):
        return rng.uniform(size=n)
    lo, hi = m.interval
    x0 = rng.uniform(lo, hi, n)
    reserve = rng.uniform(lo, hi, RESERVE_POINTS)
    state = np.zeros(2, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    one = np.empty(1, dtype=np.float64)
    for i in range(n):
        K.orbit_fill(m.code, m.packed, x0[i], burn_in, 1, one, reserve, state)
        out[i] = one[0]
    _check_state(state)
    return out
