"""Invariant-measure estimation and target-radius selection.

The empirical measure is the sorted Birkhoff sample of one long orbit (or
a sorted merge of several). For a = 2 the acip is the arcsine law with
density 1/(pi sqrt(1 - x^2)), which gives exact ball masses.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoFailure, TargetUnreachable
from .maps import DoublyIntermittent, MapSpec, PiecewiseLinearMarkov, QuadraticMis
from .orbits import orbit_chunk, spawn_generators

MIN_SAMPLES = 10_000
MIN_BURN_IN = 1_000


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    samples: np.ndarray
    burn_in: int
    seed: int
    map_id: str
    thin: int = 1
    restarts: int = 0
    interval: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float64)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    def count_in(self, lo: float, hi: float) -> int:
        """Number of samples in the open interval (lo, hi)."""
        s = self.samples
        return int(np.searchsorted(s, hi, "left") - np.searchsorted(s, lo, "right"))

    def count_halfopen(self, lo: float, hi: float) -> int:
        s = self.samples
        return int(np.searchsorted(s, hi, "left") - np.searchsorted(s, lo, "left"))

    def slice_open(self, lo: float, hi: float) -> np.ndarray:
        s = self.samples
        return s[np.searchsorted(s, lo, "right"):np.searchsorted(s, hi, "left")]

    def slice_halfopen(self, lo: float, hi: float) -> np.ndarray:
        s = self.samples
        return s[np.searchsorted(s, lo, "left"):np.searchsorted(s, hi, "left")]


def default_burn_in(m: MapSpec) -> int:
    # slow escape from neutral endpoints once beta approaches 1
    if isinstance(m, DoublyIntermittent) and m.beta >= 0.5:
        return 100_000
    return 10_000


def sample_invariant(m: MapSpec, n: int, burn_in: int | None = None, seed: int = 0,
                     thin: int = 1) -> EmpiricalMeasure:
    """Birkhoff sample of the acip from one orbit started at a uniform point.

    Records every ``thin``-th iterate after ``burn_in`` discarded steps.
    """
    if burn_in is None:
        burn_in = default_burn_in(m)
    if n < MIN_SAMPLES:
        raise ValueError(f"n must be >= {MIN_SAMPLES}")
    if burn_in < MIN_BURN_IN:
        raise ValueError(f"burn_in must be >= {MIN_BURN_IN}")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    (rng,) = spawn_generators(seed, 1)
    pts, restarts = orbit_chunk(m, n, burn_in, rng, thin)
    pts.sort()
    return EmpiricalMeasure(pts, burn_in, seed, m.map_id, thin, restarts, m.interval)


def merge(measures: list[EmpiricalMeasure]) -> EmpiricalMeasure:
    """Sorted-array merge of independently sampled measures of one map."""
    if not measures:
        raise ValueError("nothing to merge")
    ids = {mm.map_id for mm in measures}
    if len(ids) != 1:
        raise ValueError(f"cannot merge samples of different maps: {sorted(ids)}")
    out = np.concatenate([mm.samples for mm in measures])
    out.sort(kind="mergesort")
    first = measures[0]
    return EmpiricalMeasure(out, first.burn_in, first.seed, first.map_id, first.thin,
                            sum(mm.restarts for mm in measures), first.interval)


def ball_mass(m: EmpiricalMeasure, zeta: float, r: float) -> float:
    """Fraction of samples in the open ball (zeta - r, zeta + r)."""
    if not r > 0:
        raise ValueError("r must be > 0")
    return m.count_in(zeta - r, zeta + r) / m.n_samples


def arcsine_cdf(x: float) -> float:
    x = min(max(x, -1.0), 1.0)
    return math.asin(x) / math.pi + 0.5


def exact_mass_fullquad(zeta: float, r: float) -> float:
    """mu(B(zeta, r)) under the a = 2 acip, 1/(pi sqrt(1 - x^2)) on [-1, 1]."""
    return (math.asin(min(zeta + r, 1.0)) - math.asin(max(zeta - r, -1.0))) / math.pi


@dataclass(frozen=True)
class ExactArcsine:
    """Closed-form acip of T(x) = 1 - 2x^2."""

    kind: str = "arcsine"

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.abs(x) < 1, 1.0 / (np.pi * np.sqrt(1.0 - x * x)), 0.0)

    def mass(self, zeta: float, r: float) -> float:
        return exact_mass_fullquad(zeta, r)


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    dens: np.ndarray
    kind: str = field(default="histogram")

    @property
    def bins(self) -> int:
        return int(self.dens.shape[0])

    def total_mass(self) -> float:
        return float(np.sum(self.dens * np.diff(self.edges)))

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        i = np.clip(np.searchsorted(self.edges, x, "right") - 1, 0, self.bins - 1)
        inside = (x >= self.edges[0]) & (x <= self.edges[-1])
        return np.where(inside, self.dens[i], 0.0)


def histogram_density(m: EmpiricalMeasure, bins: int = 200, lo: float | None = None,
                      hi: float | None = None) -> Histogram:
    lo = m.interval[0] if lo is None else lo
    hi = m.interval[1] if hi is None else hi
    counts, edges = np.histogram(m.samples, bins=bins, range=(lo, hi))
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples in histogram range")
    dens = counts / (total * np.diff(edges))
    return Histogram(edges, dens)


def radius_for_mass(model, zeta: float, target: float) -> float:
    """Radius r with mass(B(zeta, r)) closest to ``target``.

    ``model`` is an EmpiricalMeasure (quantile inversion on |x - zeta|,
    error <= 1/n) or a closed-form model with a ``mass(zeta, r)`` method
    such as ExactArcsine (bisection, error <= 1e-12).
    """
    if not (0.0 < target < 1.0):
        raise TargetUnreachable(f"target mass {target} must lie in (0, 1)")
    if isinstance(model, EmpiricalMeasure):
        n = model.n_samples
        k = int(round(target * n))
        d = np.sort(np.abs(model.samples - zeta))
        if k < 1 or k >= n:
            raise TargetUnreachable(f"target {target} not resolvable with {n} samples")
        if d[k] == d[k - 1]:
            raise TargetUnreachable("tied sample distances at the requested quantile")
        return 0.5 * (d[k - 1] + d[k])
    if hasattr(model, "mass"):
        lo, hi = 0.0, 2.0
        if model.mass(zeta, hi) < target - 1e-12:
            raise TargetUnreachable(f"target {target} exceeds available mass")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if model.mass(zeta, mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    raise TypeError(f"unsupported mass model {type(model).__name__}")


def exact_model_for(m: MapSpec):
    """The closed-form acip when one exists, else None."""
    if isinstance(m, QuadraticMis) and m.a == 2.0:
        return ExactArcsine()
    return None


class LebesgueModel:
    """Lebesgue measure on [0, 1], the acip of every full-branch linear map."""

    kind = "lebesgue"

    def mass(self, zeta: float, r: float) -> float:
        return max(0.0, min(zeta + r, 1.0) - max(zeta - r, 0.0))


def mass_model_for(m: MapSpec):
    if isinstance(m, PiecewiseLinearMarkov):
        return LebesgueModel()
    return exact_model_for(m)


# ---------------------------------------------------------------------------
# persistence: 8-byte little-endian count, then float64 little-endian samples

_HEADER = struct.Struct("<Q")


def save(m: EmpiricalMeasure, path: str | os.PathLike) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(m.n_samples))
            fh.write(m.samples.astype("<f8", copy=False).tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load(path: str | os.PathLike, burn_in: int = 0, seed: int = -1, map_id: str = "",
         thin: int = 1, interval=(-1.0, 1.0)) -> EmpiricalMeasure:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(raw) < _HEADER.size:
        raise IoFailure(f"{path}: truncated header")
    (n,) = _HEADER.unpack_from(raw)
    if len(raw) != _HEADER.size + 8 * n:
        raise IoFailure(f"{path}: expected {n} samples, file size disagrees")
    arr = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return EmpiricalMeasure(arr, burn_in, seed, map_id, thin, 0, interval)


def cached_sample_invariant(m: MapSpec, n: int, burn_in: int | None = None, seed: int = 0,
                            thin: int = 1, cache_dir: str | None = None) -> EmpiricalMeasure:
    """sample_invariant, memoised on disk under $REPP_LAB_CACHE when set."""
    if burn_in is None:
        burn_in = default_burn_in(m)
    cache_dir = cache_dir or os.environ.get("REPP_LAB_CACHE")
    if not cache_dir:
        return sample_invariant(m, n, burn_in, seed, thin)
    key = hashlib.sha256(f"{m.map_id}|{n}|{burn_in}|{seed}|{thin}".encode()).hexdigest()[:24]
    path = Path(cache_dir) / f"measure-{key}.bin"
    if path.exists():
        return load(path, burn_in, seed, m.map_id, thin, m.interval)
    meas = sample_invariant(m, n, burn_in, seed, thin)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    save(meas, tmp)
    os.replace(tmp, path)
    return meas
