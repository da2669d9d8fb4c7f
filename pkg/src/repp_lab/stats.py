"""Distance-type tests that turn simulation output into pass/fail reports.

No p-values: each test computes a raw statistic and compares it with a
fixed threshold, so reports are deterministic given the samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import TooFewSamples, ZeroMean


@dataclass(frozen=True)
class TestReport:
    statistic: float
    n: int
    threshold: float
    passed: bool
    description: str
    kind: str = "distance"  # "distance": pass iff statistic <= threshold

    __test__ = False  # not a pytest class

    @property
    def pass_(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def distance_report(statistic: float, n: int, threshold: float, description: str) -> TestReport:
    statistic = float(statistic)
    return TestReport(statistic, int(n), float(threshold), bool(statistic <= threshold), description)


def _exp_cdf(rate: float):
    return lambda x: 1.0 - np.exp(-rate * x)


def _uniform_cdf(x):
    return np.clip(x, 0.0, 1.0)


def _reference_cdf(cdf):
    if cdf == "uniform":
        return _uniform_cdf, "Uniform(0,1)", False
    rate = 1.0 if cdf == "exp" else float(cdf[1])
    return _exp_cdf(rate), f"Exp({rate:g})", True


def ks_statistic(samples: Sequence[float], cdf: str | tuple = "uniform") -> float:
    """sup |F_n - F| evaluated at the sample points, both one-sided terms."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.shape[0] == 0:
        raise TooFewSamples("no samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    F, _, nonneg = _reference_cdf(cdf)
    if nonneg and x[0] < 0:
        raise ValueError("exponential reference needs non-negative samples")
    n = x.shape[0]
    Fx = F(x)
    i = np.arange(1, n + 1)
    return max(float(np.max(i / n - Fx)), float(np.max(Fx - (i - 1) / n)))


def ks_distance(samples: Sequence[float], cdf: str | tuple = "uniform", threshold: float = 0.05,
                description: str = "") -> TestReport:
    """One-sample Kolmogorov-Smirnov test report (n >= 20).

    ``cdf`` is ``"uniform"`` (on [0, 1]), ``"exp"`` (rate 1) or
    ``("exp", rate)``.
    """
    n = len(samples)
    if n < 20:
        raise TooFewSamples(f"ks_distance needs >= 20 samples, got {n}")
    d = ks_statistic(samples, cdf)
    name = _reference_cdf(cdf)[1]
    return distance_report(d, n, threshold, description or f"KS distance to {name}")


def geometric_pmf(theta: float, kmax: int) -> np.ndarray:
    """pi(k) = theta (1 - theta)^(k-1) for k = 1..kmax."""
    k = np.arange(1, kmax + 1)
    return theta * (1.0 - theta) ** (k - 1)


def geometric_tv(sizes: Sequence[int], theta: float, kmax: int = 10, threshold: float = 0.05,
                 description: str = "") -> TestReport:
    """Total variation between cluster sizes and Geometric(theta).

    Sizes above kmax are lumped into one cell, as is the geometric tail.
    """
    s = np.asarray(sizes, dtype=np.int64)
    if s.shape[0] < 500:
        raise TooFewSamples(f"geometric_tv needs >= 500 sizes, got {s.shape[0]}")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if np.any(s < 1):
        raise ValueError("cluster sizes must be >= 1")
    emp = np.bincount(np.minimum(s, kmax + 1), minlength=kmax + 2)[1:] / s.shape[0]
    ref = np.append(geometric_pmf(theta, kmax), (1.0 - theta) ** kmax)
    tv = 0.5 * float(np.sum(np.abs(emp - ref)))
    return distance_report(tv, s.shape[0], threshold,
                           description or f"TV to Geometric({theta:g}) over k <= {kmax}")


def dispersion_ratio(counts: Sequence[int]) -> float:
    c = np.asarray(counts, dtype=np.float64)
    if c.shape[0] < 50:
        raise TooFewSamples(f"poisson_dispersion needs >= 50 windows, got {c.shape[0]}")
    mean = c.mean()
    if mean == 0:
        raise ZeroMean("all window counts are zero")
    return float(c.var(ddof=1) / mean)


def poisson_dispersion(counts: Sequence[int], tolerance: float = 0.15, description: str = "") -> TestReport:
    """Variance-to-mean ratio of window counts; passes when |ratio - 1| <= tolerance.

    The reported statistic is the ratio itself.
    """
    ratio = dispersion_ratio(counts)
    return TestReport(ratio, len(counts), float(tolerance), bool(abs(ratio - 1.0) <= tolerance),
                      description or "window-count dispersion ratio (Poisson: 1)", kind="two-sided")


def zero_mass_fraction(return_samples: Sequence[float], eps: float) -> float:
    """Fraction of normalized return times strictly below eps."""
    x = np.asarray(return_samples, dtype=np.float64)
    if x.shape[0] == 0:
        return 0.0
    return float(np.mean(x < eps))


def two_sample_ks(a: Sequence[float], b: Sequence[float], threshold: float = 0.05,
                  description: str = "") -> TestReport:
    """Sup distance between two empirical CDFs."""
    x = np.sort(np.asarray(a, dtype=np.float64))
    y = np.sort(np.asarray(b, dtype=np.float64))
    if x.shape[0] < 100 or y.shape[0] < 100:
        raise TooFewSamples(f"two_sample_ks needs >= 100 per side, got {x.shape[0]}, {y.shape[0]}")
    grid = np.concatenate((x, y))
    fx = np.searchsorted(x, grid, "right") / x.shape[0]
    fy = np.searchsorted(y, grid, "right") / y.shape[0]
    d = float(np.max(np.abs(fx - fy)))
    return distance_report(d, min(x.shape[0], y.shape[0]), threshold,
                           description or "two-sample KS distance")


def interval_report(value: float, centre: float, radius: float, n: int, description: str) -> TestReport:
    """|value - centre| <= radius, reported as a distance test."""
    return distance_report(abs(value - centre), n, radius, description)


def bound_report(value: float, bound: float, n: int, description: str) -> TestReport:
    """value <= bound."""
    return TestReport(float(value), int(n), float(bound), bool(value <= bound), description, kind="upper-bound")


def sample_correlation(a: Sequence[float], b: Sequence[float]) -> float:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape[0] < 3 or x.std() == 0 or y.std() == 0:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1])
