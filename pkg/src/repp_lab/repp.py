"""Hit processes, escape annuli, clusters and extremal-index estimates.

For a target ball B around a point zeta of prime period p:

* the escape annulus Q_0(B) = B & T^{-p}(B^c) holds the cluster-terminal
  hits, and Q_k(B) = T^{-p}Q_{k-1}(B) & B those with exactly k further
  gap-p hits;
* the entrance set E(B) = T^{-p}B & B^c holds the points one period before
  a cluster starts.

A cluster is a maximal run of hits whose consecutive indices differ by
exactly p. For a non-periodic zeta every hit is its own cluster and
Q(B) = B by convention.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import AtBranchBoundary, InsufficientData, IoFailure
from .inducing import DEFAULT_CAP, BaseSet, shadow_estimate
from .maps import (
    PERIODIC_TOL,
    MapSpec,
    PiecewiseLinearMarkov,
    QuadraticMis,
    _check_point,
    deriv_along_orbit,
    iterate_n,
)
from .measure import EmpiricalMeasure
from .orbits import hit_chunk, run_tasks, spawn_generators

MAX_DEPTH = 200
_NO_RESERVE = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class TargetSet:
    zeta: float
    r: float
    period: int | None = None
    on_critical_orbit: bool = False
    mass: float | None = None

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be > 0")
        if self.mass is not None and not 0.0 < self.mass < 1.0:
            raise ValueError("mass must lie in (0, 1)")
        if self.period is not None and self.period < 1:
            raise ValueError("period must be >= 1")

    @property
    def lo(self) -> float:
        return self.zeta - self.r

    @property
    def hi(self) -> float:
        return self.zeta + self.r

    def contains(self, x: float) -> bool:
        return self.lo < x < self.hi

    def with_mass(self, mass: float) -> "TargetSet":
        return TargetSet(self.zeta, self.r, self.period, self.on_critical_orbit, mass)

    def to_dict(self) -> dict:
        return {"zeta": self.zeta, "r": self.r, "period": self.period,
                "on_critical_orbit": self.on_critical_orbit, "mass": self.mass}


def on_critical_orbit(m: MapSpec, zeta: float, steps: int = 64, tol: float = 1e-9) -> bool:
    """Whether zeta lies on the forward orbit of the critical point 0."""
    if not isinstance(m, QuadraticMis):
        return False
    y = 0.0
    for _ in range(steps):
        y = float(K.step(m.code, m.packed, y))
        if abs(y - zeta) <= tol:
            return True
    return False


def make_target(m: MapSpec, zeta: float, r: float, period: int | None = None,
                mass: float | None = None) -> TargetSet:
    """TargetSet with the periodicity and critical-orbit metadata checked."""
    if period is not None:
        err = abs(iterate_n(m, zeta, period) - zeta)
        if err > PERIODIC_TOL:
            raise ValueError(f"|T^{period}(zeta) - zeta| = {err:.3e} exceeds {PERIODIC_TOL}")
    return TargetSet(float(zeta), float(r), period, on_critical_orbit(m, zeta), mass)


# ---------------------------------------------------------------------------
# hit series


@dataclass(frozen=True, eq=False)
class HitSeries:
    hit_indices: np.ndarray
    horizon: int
    mass: float
    censored: int = 0

    def __post_init__(self):
        idx = np.ascontiguousarray(self.hit_indices, dtype=np.int64)
        if idx.shape[0] > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("hit indices must be strictly increasing")
        object.__setattr__(self, "hit_indices", idx)

    @property
    def n_hits(self) -> int:
        return int(self.hit_indices.shape[0])

    @property
    def normalized_interarrivals(self) -> np.ndarray:
        """mass * (first index, then consecutive gaps)."""
        if self.n_hits == 0:
            return np.empty(0)
        return self.mass * np.diff(self.hit_indices, prepend=0).astype(np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("index\n")
        for i in self.hit_indices:
            buf.write(f"{int(i)}\n")
        return buf.getvalue()

    def to_binary(self) -> bytes:
        return encode_hits(self)


def hit_times(m: MapSpec, x0: float, B: TargetSet, horizon: int, mass: float | None = None) -> HitSeries:
    """All i in [0, horizon] with T^i x0 in B, following the float orbit exactly."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    x0 = _check_point(m, x0)
    state = np.zeros(2, dtype=np.int64)
    idx = K.scan_hits(m.code, m.packed, x0, 0, horizon + 1, B.lo, B.hi, _NO_RESERVE, state)
    mass = B.mass if mass is None else mass
    return HitSeries(idx, horizon, float("nan") if mass is None else mass)


@dataclass(frozen=True, eq=False)
class ChunkedHits:
    """Hits of independent orbit chunks; indices are chunk-local."""

    chunks: list[np.ndarray]
    chunk_len: int
    mass: float
    restarts: int

    @property
    def n_hits(self) -> int:
        return int(sum(c.shape[0] for c in self.chunks))

    @property
    def total_steps(self) -> int:
        return self.chunk_len * len(self.chunks)

    def series(self) -> list[HitSeries]:
        return [HitSeries(c, self.chunk_len - 1, self.mass) for c in self.chunks]


def simulate_hits(m: MapSpec, B: TargetSet, n_steps: int, seed: int, n_chunks: int = 16,
                  burn_in: int = 10_000, threads: int | None = None,
                  mass: float | None = None) -> ChunkedHits:
    """Hit indices along n_steps orbit steps split into independent chunks.

    Chunk seeds come from the master seed, so the result is the same for
    every thread count.
    """
    chunk_len = -(-n_steps // n_chunks)
    rngs = spawn_generators(seed, n_chunks)
    res = run_tasks(lambda rng: hit_chunk(m, B.lo, B.hi, chunk_len, burn_in, rng), rngs, threads)
    mass = B.mass if mass is None else mass
    return ChunkedHits([r[0] for r in res], chunk_len, float("nan") if mass is None else mass,
                       sum(r[1] for r in res))


def window_counts(hits: ChunkedHits, window: int, indices: list[np.ndarray] | None = None) -> np.ndarray:
    """Event counts in consecutive full windows; windows never span chunks."""
    chunks = hits.chunks if indices is None else indices
    per = hits.chunk_len // window
    out = []
    for c in chunks:
        b = np.bincount(c // window, minlength=per)[:per] if c.shape[0] else np.zeros(per, np.int64)
        out.append(b)
    return np.concatenate(out) if out else np.empty(0, np.int64)


# ---------------------------------------------------------------------------
# annuli and entrances


def annulus_index(m: MapSpec, B: TargetSet, x: float, max_depth: int = MAX_DEPTH) -> int | None:
    """k with x in Q_k(B), i.e. the smallest k with T^{(k+1)p} x outside B.

    None when x is still inside after max_depth + 1 periods.
    """
    if B.period is None:
        raise ValueError("annulus index needs a periodic target")
    x = _check_point(m, x)
    if not B.contains(x):
        raise ValueError("x must lie in the target")
    k = int(K.annulus_indices(m.code, m.packed, np.array([x]), B.period, B.lo, B.hi, max_depth)[0])
    return None if k < 0 else k


def annulus_indices(m: MapSpec, B: TargetSet, xs: np.ndarray, max_depth: int = MAX_DEPTH,
                    threads: int | None = None) -> np.ndarray:
    """Vectorised annulus_index; -1 marks the core (deeper than max_depth)."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if xs.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    parts = np.array_split(xs, min(16, xs.shape[0]))
    return np.concatenate(run_tasks(
        lambda part: K.annulus_indices(m.code, m.packed, part, B.period, B.lo, B.hi, max_depth),
        parts, threads))


def entrance_member(m: MapSpec, B: TargetSet, x: float) -> bool:
    """x outside B with T^p x inside B."""
    if B.period is None:
        raise ValueError("entrance set needs a periodic target")
    x = _check_point(m, x)
    return bool(K.entrance_flags(m.code, m.packed, np.array([x]), B.period, B.lo, B.hi)[0])


@dataclass(frozen=True, eq=False)
class AnnulusProfile:
    counts: np.ndarray  # counts[k] = samples of B in Q_k(B)
    core: int
    n_target: int
    n_total: int
    entrance: int

    def mass(self, k: int) -> float:
        return self.counts[k] / self.n_total

    @property
    def ratio(self) -> float:
        return self.counts[0] / self.n_target

    def geometric_ratio(self, k: int) -> float:
        """mu(Q_{k-1}) / mu(Q_0), the limit law of P(K >= k)."""
        return self.counts[k - 1] / self.counts[0]


def annulus_profile(m: MapSpec, B: TargetSet, meas: EmpiricalMeasure, max_depth: int = MAX_DEPTH,
                    with_entrance: bool = True, threads: int | None = None) -> AnnulusProfile:
    xb = meas.slice_open(B.lo, B.hi)
    k = annulus_indices(m, B, xb, max_depth, threads)
    counts = np.bincount(k[k >= 0], minlength=max_depth + 1)
    ent = 0
    if with_entrance:
        parts = np.array_split(meas.samples, 16)
        ent = int(sum(np.sum(f) for f in run_tasks(
            lambda part: K.entrance_flags(m.code, m.packed, part, B.period, B.lo, B.hi),
            parts, threads)))
    return AnnulusProfile(counts, int(np.sum(k < 0)), int(xb.shape[0]), meas.n_samples, ent)


# ---------------------------------------------------------------------------
# clusters


@dataclass(frozen=True, eq=False)
class ClusterSeries:
    starts: np.ndarray
    sizes: np.ndarray
    period: int
    theta_context: float | None = None

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.shape[0])

    @property
    def clusters(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in zip(self.starts, self.sizes)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("start,size\n")
        for a, b in zip(self.starts, self.sizes):
            buf.write(f"{int(a)},{int(b)}\n")
        return buf.getvalue()

    def inter_cluster_gaps(self) -> np.ndarray:
        """Gap from the end of each cluster to the start of the next."""
        ends = self.starts + (self.sizes - 1) * self.period
        return (self.starts[1:] - ends[:-1]).astype(np.int64)


def extract_clusters(h: HitSeries | np.ndarray, p: int) -> ClusterSeries:
    """Maximal runs of hits spaced exactly p apart."""
    if p < 1:
        raise ValueError("p must be >= 1")
    idx = h.hit_indices if isinstance(h, HitSeries) else np.asarray(h, dtype=np.int64)
    if idx.shape[0] == 0:
        return ClusterSeries(np.empty(0, np.int64), np.empty(0, np.int64), p)
    breaks = np.flatnonzero(np.diff(idx) != p) + 1
    first = np.concatenate(([0], breaks))
    last = np.concatenate((breaks, [idx.shape[0]]))
    return ClusterSeries(idx[first], (last - first).astype(np.int64), p)


def merge_clusters(parts: Sequence[ClusterSeries]) -> ClusterSeries:
    """Concatenate per-chunk cluster lists (starts stay chunk-local)."""
    p = parts[0].period
    return ClusterSeries(np.concatenate([c.starts for c in parts]),
                         np.concatenate([c.sizes for c in parts]), p)


def clusters_from_chunks(hits: ChunkedHits, p: int) -> ClusterSeries:
    return merge_clusters([extract_clusters(c, p) for c in hits.chunks])


# ---------------------------------------------------------------------------
# extremal index


def theta_theoretical(m: MapSpec, zeta: float, p: int, on_critical_orbit: bool = False) -> float:
    """1 - |(T^p)'(zeta)|^{-1}, or 1 - |(T^p)'(zeta)|^{-1/2} on the critical orbit.

    A neutral point (|(T^p)'| = 1) gives 0.
    """
    d = abs(deriv_along_orbit(m, zeta, p))
    if abs(d - 1.0) <= 1e-12:
        return 0.0
    if d < 1.0:
        raise ValueError(f"|(T^p)'(zeta)| = {d} < 1: zeta is attracting")
    return 1.0 - (d ** -0.5 if on_critical_orbit else 1.0 / d)


@dataclass(frozen=True)
class ThetaEstimate:
    theoretical: float | None
    ratio: float
    cluster_fit: float
    ratio_se: float
    cluster_fit_se: float
    n_target_samples: int
    n_clusters: int

    def to_dict(self) -> dict:
        return {
            "theoretical": self.theoretical, "ratio": self.ratio, "ratio_se": self.ratio_se,
            "cluster_fit": self.cluster_fit, "cluster_fit_se": self.cluster_fit_se,
            "n_target_samples": self.n_target_samples, "n_clusters": self.n_clusters,
        }


MIN_CLUSTERS = 500
MIN_TARGET_SAMPLES = 1_000


def cluster_fit(sizes: np.ndarray) -> tuple[float, float]:
    """Geometric maximum-likelihood theta = 1 / mean size, with its delta-method SE."""
    sizes = np.asarray(sizes, dtype=np.float64)
    mean = sizes.mean()
    theta = 1.0 / mean
    se = theta * theta * sizes.std(ddof=1) / math.sqrt(sizes.shape[0]) if sizes.shape[0] > 1 else math.nan
    return float(theta), float(se)


def theta_estimates(m: MapSpec, B: TargetSet, meas: EmpiricalMeasure, clusters: ClusterSeries | None,
                    profile: AnnulusProfile | None = None, threads: int | None = None) -> ThetaEstimate:
    """Annulus-ratio and cluster-size estimates of the extremal index."""
    theo = None
    if B.period is not None:
        try:
            theo = theta_theoretical(m, B.zeta, B.period, B.on_critical_orbit)
        except (AtBranchBoundary, ValueError):
            theo = None
    else:
        theo = 1.0
    if B.period is None:
        n_b = meas.count_in(B.lo, B.hi)
        ratio, ratio_se = 1.0, 0.0
    else:
        prof = profile or annulus_profile(m, B, meas, with_entrance=False, threads=threads)
        n_b = prof.n_target
        if n_b < MIN_TARGET_SAMPLES:
            raise InsufficientData(f"{n_b} measure samples in B, need {MIN_TARGET_SAMPLES}")
        ratio = prof.ratio
        ratio_se = math.sqrt(ratio * (1 - ratio) / n_b)
    if clusters is None or clusters.n_clusters < MIN_CLUSTERS:
        raise InsufficientData(
            f"{0 if clusters is None else clusters.n_clusters} clusters, need {MIN_CLUSTERS}")
    cf, cf_se = cluster_fit(clusters.sizes)
    return ThetaEstimate(theo, float(ratio), cf, float(ratio_se), cf_se, int(n_b), clusters.n_clusters)


# ---------------------------------------------------------------------------
# induced processes


def induced_hit_series(m: MapSpec, A: BaseSet, B: TargetSet, x0: float, induced_horizon: int,
                       mass: float | None = None, meas: EmpiricalMeasure | None = None,
                       cap: int = DEFAULT_CAP) -> HitSeries:
    """Induced times i <= induced_horizon with T_A^i x0 in the shadow B'.

    Normalised by mu_A(B'), taken from ``mass`` or estimated from ``meas``.
    A capped excursion ends the series early and is flagged as censored.
    """
    x0 = _check_point(m, x0)
    if not A.contains(x0):
        raise ValueError("x0 must lie in the base")
    if mass is None:
        if meas is None:
            mass = float("nan")
        else:
            est = shadow_estimate(m, A, B, meas, cap)
            mass = est.shadow_mass / est.base_mass
    idx, _, censored = K.induced_scan(m.code, m.packed, x0, A.lo, A.hi, B.lo, B.hi,
                                      induced_horizon, cap)
    return HitSeries(idx, induced_horizon, mass, int(censored))


@dataclass(frozen=True, eq=False)
class PairedInterarrivals:
    original: np.ndarray  # mu(B) * r_B(x)
    induced: np.ndarray  # mu_A(B') * (first induced hitting time of B')
    censored: int


def _pl_pair(m: PiecewiseLinearMarkov, A: BaseSet, B: TargetSet, rng, cap: int, first_len: int):
    # exact orbit from a Lebesgue point conditioned on A, rebuilt longer if undecided
    while True:
        x_end = float(rng.uniform())
        n = first_len
        syms = rng.choice(len(m.slopes), size=n, p=m.branch_probs).astype(np.int64)
        while True:
            xs = np.empty(n + 1)
            xs[n] = x_end
            K.pl_backward_orbit(m.packed, syms, x_end, xs[:n])
            if not A.contains(xs[0]):
                break
            o, i = K.paired_from_orbit(xs, A.lo, A.hi, B.lo, B.hi)
            if (o >= 0 and i >= 0) or n >= cap:
                return o, i
            more = rng.choice(len(m.slopes), size=n, p=m.branch_probs).astype(np.int64)
            syms = np.concatenate((syms, more))
            n *= 2


def first_interarrival_pairs(m: MapSpec, A: BaseSet, B: TargetSet, n_starts: int, mass_B: float,
                             mass_shadow_A: float, seed: int, meas: EmpiricalMeasure | None = None,
                             cap: int = DEFAULT_CAP) -> PairedInterarrivals:
    """Original and induced normalized first hitting times from common starts in A.

    Each start x ~ mu_A yields mu(B) r_B(x) and mu_A(B') j(x), where j is
    the first induced time with T_A^j x in B'. Sharing the start couples the
    two samples, so their empirical laws can be compared at small n.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if isinstance(m, PiecewiseLinearMarkov):
        first_len = int(min(cap, max(1024, 16 / max(mass_B, 1e-12))))
        pairs = [_pl_pair(m, A, B, rng, cap, first_len) for _ in range(n_starts)]
        orig = np.array([p[0] for p in pairs], dtype=np.int64)
        ind = np.array([p[1] for p in pairs], dtype=np.int64)
    else:
        if meas is None:
            raise ValueError("starts in A are drawn from the measure sample; pass meas")
        xa = meas.slice_halfopen(A.lo, A.hi)
        if xa.shape[0] < n_starts:
            raise InsufficientData(f"{xa.shape[0]} measure samples in A, need {n_starts}")
        starts = np.sort(rng.choice(xa, size=n_starts, replace=False))
        orig, ind = K.paired_first_hits(m.code, m.packed, starts, A.lo, A.hi, B.lo, B.hi, cap)
    ok = (orig >= 0) & (ind >= 0)
    return PairedInterarrivals(mass_B * orig[ok], mass_shadow_A * ind[ok], int(np.sum(~ok)))


def hitting_times(m: MapSpec, B: TargetSet, starts: np.ndarray, cap: int = DEFAULT_CAP,
                  threads: int | None = None) -> np.ndarray:
    """r_B(x) = min{k >= 1 : T^k x in B} per start; -1 if capped."""
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    parts = np.array_split(starts, min(16, max(starts.shape[0], 1)))
    # open ball: the half-open kernel differs only on the null set {x = lo}
    return np.concatenate(run_tasks(
        lambda part: K.return_times(m.code, m.packed, part, np.nextafter(B.lo, np.inf), B.hi, cap),
        parts, threads))


# ---------------------------------------------------------------------------
# binary run-length format for hit series
#
#   magic b"RHS1" | u64 horizon | f64 mass | u64 n_runs
#   then n_runs records (i64 first, i64 gap, i64 count): the run
#   first, first+gap, ..., first+(count-1)*gap

_HIT_HEAD = struct.Struct("<4sQdQ")


def encode_hits(h: HitSeries) -> bytes:
    idx = h.hit_indices
    runs = []
    i = 0
    n = idx.shape[0]
    while i < n:
        if i + 1 < n:
            gap = int(idx[i + 1] - idx[i])
            j = i + 1
            while j + 1 < n and idx[j + 1] - idx[j] == gap:
                j += 1
            runs.append((int(idx[i]), gap, j - i + 1))
            i = j + 1
        else:
            runs.append((int(idx[i]), 0, 1))
            i += 1
    body = np.array(runs, dtype="<i8").tobytes() if runs else b""
    return _HIT_HEAD.pack(b"RHS1", h.horizon, h.mass, len(runs)) + body


def decode_hits(data: bytes) -> HitSeries:
    try:
        magic, horizon, mass, n_runs = _HIT_HEAD.unpack_from(data)
    except struct.error as exc:
        raise IoFailure("truncated hit-series header") from exc
    if magic != b"RHS1":
        raise IoFailure("not a hit-series file")
    body = np.frombuffer(data, dtype="<i8", offset=_HIT_HEAD.size)
    if body.shape[0] != 3 * n_runs:
        raise IoFailure("hit-series body length disagrees with header")
    runs = body.reshape(n_runs, 3)
    pieces = [first + gap * np.arange(count, dtype=np.int64) for first, gap, count in runs]
    idx = np.concatenate(pieces) if pieces else np.empty(0, np.int64)
    return HitSeries(idx, int(horizon), float(mass))


def clusters_to_csv_rows(c: ClusterSeries) -> list[tuple[int, int]]:
    return c.clusters


def write_csv(rows: Sequence[Sequence], header: Sequence[str], path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
