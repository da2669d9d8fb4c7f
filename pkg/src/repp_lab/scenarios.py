"""Scenario runners behind the ``repp-lab`` command.

Each scenario builds a map from its configuration, runs the estimators
end to end and collects TestReports, extremal-index estimates,
censoring fractions and plot curves in a Results object. Results hold
no wall-clock data so that identical configurations give byte-identical
JSON; timings are kept apart for the manifest.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .config import TARGET_TEMPLATE, sub_seed
from .errors import (
    ConfigInvalid,
    InsufficientData,
    NoSignChange,
    NotPrimePeriod,
    NoConvergence,
    ReppLabError,
    TargetNotCylinderAligned,
)
from .inducing import (
    BaseSet,
    base_delta0,
    base_misiurewicz,
    explicit_base,
    hyp_diagnostics,
    partition_tail,
    return_tail,
    return_times,
    shadow_estimate,
    stratified,
)
from .maps import (
    DoublyIntermittent,
    MapSpec,
    PiecewiseLinearMarkov,
    QuadraticMis,
    deriv_along_orbit,
    find_periodic,
    is_periodic,
    iterate_n,
    map_from_config,
    map_to_config,
)
from .measure import cached_sample_invariant, mass_model_for, radius_for_mass
from .oracle import (
    SymbolicSystem,
    exact_hitting_distribution,
    exact_return_tail,
    exact_shadow_measure,
    exact_theta_linear,
    random_cylinder_pairs,
)
from .repp import (
    TargetSet,
    annulus_indices,
    annulus_profile,
    clusters_from_chunks,
    extract_clusters,
    first_interarrival_pairs,
    hit_times,
    hitting_times,
    make_target,
    simulate_hits,
    theta_estimates,
    window_counts,
)
from .stats import (
    TestReport,
    bound_report,
    distance_report,
    dispersion_ratio,
    geometric_pmf,
    geometric_tv,
    interval_report,
    ks_distance,
    poisson_dispersion,
    sample_correlation,
    two_sample_ks,
    zero_mass_fraction,
)

DEFAULT_MASSES = [1e-2, 3e-3, 1e-3, 3e-4]
CDF_GRID = np.linspace(0.0, 5.0, 101)


# ---------------------------------------------------------------------------
# results container


@dataclass
class Curve:
    columns: list[str]
    rows: list[list]
    comment: str

    def to_dict(self) -> dict:
        return {"columns": self.columns, "comment": self.comment, "rows": self.rows}


@dataclass
class Results:
    scenario: str
    config: dict
    reports: list[tuple[str, TestReport]] = field(default_factory=list)
    theta: list[dict] = field(default_factory=list)
    censoring: dict[str, float] = field(default_factory=dict)
    values: dict[str, object] = field(default_factory=dict)
    curves: dict[str, Curve] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def check(self, name: str, report: TestReport) -> TestReport:
        self.reports.append((name, report))
        return report

    def curve(self, name: str, columns: list[str], rows, comment: str) -> None:
        self.curves[name] = Curve(list(columns), [list(r) for r in rows], comment)

    @contextlib.contextmanager
    def timed(self, label: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - t0

    @property
    def failing(self) -> list[str]:
        return [name for name, r in self.reports if not r.passed]

    @property
    def all_pass(self) -> bool:
        return not self.failing

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "version": __version__,
            "seed": self.config["seed"],
            "config": {k: v for k, v in self.config.items() if k not in ("threads", "output")},
            "all_pass": self.all_pass,
            "failing": self.failing,
            "reports": [dict(name=name, **r.to_dict()) for name, r in self.reports],
            "theta": self.theta,
            "censoring": self.censoring,
            "values": self.values,
            "curves": {k: c.to_dict() for k, c in sorted(self.curves.items())},
        }


# ---------------------------------------------------------------------------
# shared configuration tables


def _common(map_cfg: dict) -> dict:
    return {"seed": None, "threads": 0, "map": map_cfg, "output": {"dir": "repp-out"}}


TARGET_DEFAULTS = TARGET_TEMPLATE

RUN_DEFAULTS = {
    "orbit_length": 100_000_000,
    "chunks": 16,
    "burn_in": 10_000,
    "measure_samples": 10_000_000,
    "measure_thin": 10,
    "measure_burn_in": 10_000,
    "hitting_starts": 2_000,
    "max_returns": 20_000,
    "max_depth": 200,
    "cap": 10_000_000,
}

DEFAULTS: dict[str, dict] = {
    "oracle-validate": {
        **_common({"family": "piecewise_linear", "preset": "doubling"}),
        "oracle": {"depth": 20, "pairs": 50, "max_base_len": 3, "time_depth": 400,
                   "hitting_word": [1, 0, 1], "hitting_t_max": 40, "mc_starts": 100_000,
                   "matrix_depth": 10, "tail_t_max": 20},
        "run": {"measure_samples": 1_000_000, "theta_mass": 1e-2},
        "tolerances": {"identity": 1e-10, "hand": 1e-12, "row_sum": 1e-12, "mc_bin": 4.0,
                       "theta_se": 3.0},
    },
    "inducing-equivalence": {
        **_common({"family": "piecewise_linear", "preset": "doubling"}),
        "base": {"kind": "interval", "lo": 0.0, "hi": 0.5, "max_p": 8, "max_xi": 0.3},
        "target": {**TARGET_DEFAULTS, "interval": [0.8134765625, 0.814453125]},
        "schedule": {"masses": [1e-3]},
        "run": {**RUN_DEFAULTS, "n_starts": 2_000, "measure_thin": 1},
        "tolerances": {"ks2": 0.05, "identity_se": 4.0, "hyp_eps": 0.01},
    },
    "dichotomy-mis": {
        **_common({"family": "quadratic", "a": 2.0}),
        "target": {**TARGET_DEFAULTS, "zeta": 0.5, "period": 1},
        "schedule": {"masses": list(DEFAULT_MASSES), "radii": None},
        "run": dict(RUN_DEFAULTS),
        "tolerances": {"theta": 0.03, "tv": 0.05, "kmax": 10, "zero_mass": 0.05, "ks": 0.05,
                       "dispersion": 0.15, "eps_factor": 10.0, "neutral_theta_max": 0.1,
                       "fd_rel": 1e-6},
    },
    "dichotomy-di": {
        **_common({"family": "doubly_intermittent", "l1": 0.25, "l2": 0.25}),
        "target": {**TARGET_DEFAULTS, "search_period": 2},
        "schedule": {"masses": list(DEFAULT_MASSES), "radii": None},
        "run": {**RUN_DEFAULTS, "measure_thin": 3},
        "tolerances": {"theta": 0.05, "tv": 0.05, "kmax": 10, "zero_mass": 0.05, "ks": 0.05,
                       "dispersion": 0.15, "eps_factor": 10.0, "neutral_theta_max": 0.1,
                       "fd_rel": 1e-6},
    },
    "cluster-reconstruction": {
        **_common({"family": "quadratic", "a": 2.0}),
        "target": {**TARGET_DEFAULTS, "zeta": 0.5, "period": 1},
        "schedule": {"masses": [1e-3], "radii": None},
        "run": {**RUN_DEFAULTS, "consistency_samples": 10_000},
        "tolerances": {"tv": 0.05, "kmax": 10, "tail_se": 3.0, "kmax_tail": 6, "min_clusters": 5000,
                       "entrance_se": 3.0, "correlation": 0.05, "dispersion": 0.15},
    },
    "tails": {
        **_common({"family": "doubly_intermittent", "l1": 0.25, "l2": 0.25}),
        "base": {"kind": "delta0-", "lo": 0.0, "hi": 0.0, "max_p": 8, "max_xi": 0.3},
        "run": {"measure_samples": 10_000_000, "measure_thin": 3, "measure_burn_in": 10_000,
                "cap": 10_000_000, "max_starts": 0, "t_min": 1, "t_max": 1000, "points": 40,
                "fit_range": [10, 1000], "bins": 400, "min_count": 100},
        "tolerances": {"slope_max": -3.5, "censoring": 0.01, "agreement_se": 4.0, "loglin_r2": 0.98},
    },
}

SCENARIOS = tuple(DEFAULTS)


# ---------------------------------------------------------------------------
# builders


def build_map(cfg: dict) -> MapSpec:
    try:
        return map_from_config(cfg["map"])
    except (KeyError, TypeError, ValueError, ReppLabError) as exc:
        raise ConfigInvalid(f"map: {exc}") from exc


def build_measure(m: MapSpec, cfg: dict, res: Results):
    run = cfg["run"]
    with res.timed("measure"):
        meas = cached_sample_invariant(m, int(run["measure_samples"]),
                                       int(run.get("measure_burn_in", 10_000)),
                                       sub_seed(cfg["seed"], "measure"), int(run.get("measure_thin", 1)))
    res.values["measure"] = {"n": meas.n_samples, "thin": meas.thin, "restarts": meas.restarts}
    return meas


def build_base(m: MapSpec, bcfg: dict) -> BaseSet:
    kind = bcfg["kind"]
    try:
        if kind == "interval":
            return explicit_base(bcfg["lo"], bcfg["hi"])
        if kind == "misiurewicz":
            return base_misiurewicz(m, int(bcfg["max_p"]), float(bcfg["max_xi"]))
        if kind in ("delta0-", "delta0+"):
            return base_delta0(m, -1 if kind == "delta0-" else 1)
    except ReppLabError as exc:
        raise ConfigInvalid(f"base: {exc}") from exc
    raise ConfigInvalid(f"unknown base kind {kind!r}")


def search_periodic(m: MapSpec, p: int, bracket=None, grid: int = 20001) -> float:
    """First point of prime period p found by scanning T^p(x) - x for sign changes."""
    lo, hi = bracket if bracket is not None else m.interval
    if bracket is not None:
        try:
            return find_periodic(m, p, (lo, hi))
        except (NoSignChange, NotPrimePeriod, NoConvergence) as exc:
            raise ConfigInvalid(f"target.search_bracket: {exc}") from exc
    xs = np.linspace(lo, hi, grid)[1:-1]
    g = np.array([iterate_n(m, float(x), p) - x for x in xs])
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        try:
            z = find_periodic(m, p, (float(xs[i]), float(xs[i + 1])))
        except (NoSignChange, NotPrimePeriod, NoConvergence):
            continue  # a jump of T^p, not a root
        if abs(iterate_n(m, z, p) - z) <= 1e-13:
            return z
    raise ConfigInvalid(f"no point of prime period {p} found in [{lo}, {hi}]")


def finite_difference(m: MapSpec, x: float, p: int, h: float = 1e-6) -> float:
    """Second-order difference quotient of T^p; one-sided at the interval ends."""
    lo, hi = m.interval
    f = lambda y: iterate_n(m, y, p)  # noqa: E731
    if lo <= x - h and x + h <= hi:
        return (f(x + h) - f(x - h)) / (2 * h)
    if x + 2 * h <= hi:
        return (-3 * f(x) + 4 * f(x + h) - f(x + 2 * h)) / (2 * h)
    return (3 * f(x) - 4 * f(x - h) + f(x - 2 * h)) / (2 * h)


def resolve_point(m: MapSpec, tcfg: dict) -> tuple[float, int | None]:
    if tcfg["search_period"] is not None:
        p = int(tcfg["search_period"])
        return search_periodic(m, p, tcfg["search_bracket"]), p
    if tcfg["interval"] is not None:
        lo, hi = tcfg["interval"]
        return 0.5 * (lo + hi), tcfg["period"]
    if tcfg["zeta"] is None:
        raise ConfigInvalid("target needs one of zeta, search_period or interval")
    z = float(tcfg["zeta"])
    if tcfg["period"] is not None:
        return z, int(tcfg["period"])
    return z, is_periodic(m, z, int(tcfg["nonperiodic_max"]), tol=1e-13)


def targets_for(m: MapSpec, cfg: dict, meas, zeta: float, period: int | None) -> list[TargetSet]:
    """Targets along the schedule: explicit radii, or radii solving for the masses."""
    sched = cfg["schedule"]
    model = mass_model_for(m)
    out = []
    if sched.get("radii"):
        for r in sched["radii"]:
            mass = model.mass(zeta, r) if model is not None else meas.count_in(zeta - r, zeta + r) / meas.n_samples
            out.append(_target(m, zeta, r, period, mass))
        return out
    for mass in sched["masses"]:
        r = radius_for_mass(model if model is not None else meas, zeta, mass)
        out.append(_target(m, zeta, r, period, mass))
    return out


def _target(m, zeta, r, period, mass) -> TargetSet:
    try:
        return make_target(m, zeta, r, period, float(mass))
    except ValueError as exc:
        raise ConfigInvalid(f"target: {exc}") from exc


def _label(mass: float) -> str:
    return f"mass={mass:g}"


def _cdf_rows(samples: list[np.ndarray]) -> list[list[float]]:
    sorted_s = [np.sort(s) for s in samples]
    return [[float(x)] + [float(np.searchsorted(s, x, "right") / max(s.shape[0], 1)) for s in sorted_s]
            for x in CDF_GRID]


def _lower_bound(value: float, bound: float, n: int, description: str) -> TestReport:
    return TestReport(float(value), int(n), float(bound), bool(value >= bound), description, kind="lower-bound")


# ---------------------------------------------------------------------------
# oracle-validate


def run_oracle_validate(cfg: dict, res: Results) -> None:
    m = build_map(cfg)
    if not isinstance(m, PiecewiseLinearMarkov):
        raise ConfigInvalid("oracle-validate needs a piecewise_linear map")
    oc, tol = cfg["oracle"], cfg["tolerances"]
    sys = SymbolicSystem(m, oc["depth"])
    doubling = m == PiecewiseLinearMarkov.doubling()

    with res.timed("shadow-identity"):
        if doubling:
            A, E = sys.from_interval(0, Fraction(1, 2)), sys.from_interval(Fraction(1, 2), Fraction(3, 4))
            lhs, rhs = exact_shadow_measure(sys, A, E, oc["time_depth"])
            res.check("hand case: mu(E') = 1/4",
                      interval_report(lhs, 0.25, tol["hand"], 1, "A=[0,1/2), E=[1/2,3/4): mu(E')"))
            res.check("hand case: mu(E & {r_A <= r_E}) = 1/4",
                      interval_report(rhs, 0.25, tol["hand"], 1, "A=[0,1/2), E=[1/2,3/4): base-first mass"))
        rng = np.random.default_rng(sub_seed(cfg["seed"], "oracle/pairs"))
        pairs = random_cylinder_pairs(sys, oc["pairs"], rng, oc["max_base_len"])
        gaps = [abs(a - b) for a, b in (exact_shadow_measure(sys, A, E, oc["time_depth"]) for A, E in pairs)]
        res.check("shadow identity on random cylinder pairs",
                  distance_report(max(gaps), len(gaps), tol["identity"],
                                  "max |mu(E') - mu(E & {r_A <= r_E})| over random (A, E)"))
    res.values["shadow_gaps"] = gaps

    L = oc["matrix_depth"]
    P = sys.transition_matrix(L)
    res.check("transition matrix rows sum to 1",
              distance_report(float(np.max(np.abs(np.asarray(P.sum(axis=1)).ravel() - 1.0))), P.shape[0],
                              tol["row_sum"], f"max |row sum - 1| at depth {L}"))

    # hitting law of a cylinder: exact shift recursion vs explicit taboo matrix vs Monte Carlo
    word = tuple(oc["hitting_word"])
    target = sys.cylinder(word)
    t_max = oc["hitting_t_max"]
    exact = exact_hitting_distribution(sys, target, t_max)
    Lw = max(len(word), 1)
    Pw = sys.transition_matrix(Lw).toarray()
    keep = ~sys.mask(target, Lw)
    v = sys.weights(Lw)
    taboo = []
    for _ in range(t_max):
        v = v @ Pw
        taboo.append(float(v[~keep].sum()))
        v = np.where(keep, v, 0.0)
    res.check("hitting law: shift recursion vs taboo matrix",
              distance_report(float(np.max(np.abs(exact - taboo))), t_max, t_max * Lw * 1e-14,
                              "max_t |P(r = t)| difference between two exact computations"))
    lo, hi = (float(x) for x in sys.word_interval(word))
    n_mc = oc["mc_starts"]
    starts = np.random.default_rng(sub_seed(cfg["seed"], "oracle/mc")).uniform(size=n_mc)
    r = return_times(m, explicit_base(lo, hi), starts, cap=t_max)
    emp = np.bincount(r[r > 0], minlength=t_max + 1)[1:t_max + 1] / n_mc
    res.check("Monte Carlo hitting law vs exact",
              distance_report(float(np.max(np.abs(emp - exact))), n_mc, tol["mc_bin"] / math.sqrt(n_mc),
                              f"max_t |P-hat(r = t) - P(r = t)| for cylinder {list(word)}, bound 4/sqrt(N)"))
    res.curve("hitting_law", ["t", "exact", "monte_carlo"],
              [[t + 1, float(exact[t]), float(emp[t])] for t in range(t_max)],
              "t = hitting time; exact = oracle P(r = t); monte_carlo = empirical frequency from uniform starts")

    # return tail of the base [0, 1/2) and extremal indices against a measure sample
    meas = build_measure(m, cfg, res)
    if doubling:
        A = sys.from_interval(0, Fraction(1, 2))
        t_tail = oc["tail_t_max"]
        ex_tail = exact_return_tail(sys, A, t_tail)
        curve = return_tail(m, explicit_base(0.0, 0.5), meas, range(0, t_tail + 1))
        z = np.abs(curve.tail - ex_tail) / np.sqrt(np.maximum(ex_tail * (1 - ex_tail), 1e-300) / curve.n)
        z[ex_tail * (1 - ex_tail) == 0] = 0.0
        res.check("return tail of [0, 1/2) vs exact 2^-t",
                  distance_report(float(np.max(z)), curve.n, tol["mc_bin"],
                                  "max_t |tail-hat - tail| in binomial standard errors"))
        res.curve("return_tail", ["t", "tail", "exact"],
                  [[int(t), float(a), float(b)] for t, a, b in zip(curve.t, curve.tail, ex_tail)],
                  "t = return time; tail = empirical mu_A(r_A > t); exact = oracle value, A = [0, 1/2)")
        for zeta, p in ((Fraction(0), 1), (Fraction(1, 3), 2)):
            th = float(exact_theta_linear(sys, zeta, p))
            mass = cfg["run"]["theta_mass"]
            B = _target(m, float(zeta), radius_for_mass(mass_model_for(m), float(zeta), mass), p, mass)
            prof = annulus_profile(m, B, meas, with_entrance=False, threads=cfg["threads"])
            se = math.sqrt(prof.ratio * (1 - prof.ratio) / prof.n_target)
            res.check(f"exact theta at zeta={zeta}, p={p}",
                      distance_report(abs(prof.ratio - th) / se, prof.n_target, tol["theta_se"],
                                      f"|ratio - exact theta {th:g}| in standard errors"))
            res.theta.append({"label": f"zeta={zeta},p={p}", "exact": th, "ratio": prof.ratio, "ratio_se": se})


# ---------------------------------------------------------------------------
# inducing-equivalence


def _pl_shadow_mass(m: PiecewiseLinearMarkov, A: BaseSet, B: TargetSet) -> float | None:
    """Exact mu(B') when base and target are cylinder unions, else None."""
    try:
        sys = SymbolicSystem(m, 20)
        cA = sys.from_interval(Fraction(A.lo), Fraction(A.hi))
        cB = sys.from_interval(Fraction(B.lo), Fraction(B.hi))
    except TargetNotCylinderAligned:
        return None
    lhs, _ = exact_shadow_measure(sys, cA, cB)
    return lhs


def run_inducing(cfg: dict, res: Results) -> None:
    m = build_map(cfg)
    tol, run = cfg["tolerances"], cfg["run"]
    A = build_base(m, cfg["base"])
    res.values["base"] = A.to_dict()
    meas = build_measure(m, cfg, res)
    zeta, period = resolve_point(m, cfg["target"])
    if cfg["target"]["interval"] is not None:
        lo, hi = cfg["target"]["interval"]
        model = mass_model_for(m)
        mass = model.mass(zeta, 0.5 * (hi - lo)) if model else meas.count_in(lo, hi) / meas.n_samples
        targets = [_target(m, zeta, 0.5 * (hi - lo), period, mass)]
    else:
        targets = targets_for(m, cfg, meas, zeta, period)
    for i, B in enumerate(targets):
        lab = _label(B.mass)
        if B.lo < A.hi and A.lo < B.hi:
            raise ConfigInvalid(f"target ({B.lo}, {B.hi}) must lie outside the base [{A.lo}, {A.hi})")
        with res.timed(f"shadow {lab}"):
            est = shadow_estimate(m, A, B, meas, run["cap"], threads=cfg["threads"])
        gap = abs(est.shadow_mass - est.identity_rhs)
        se = math.hypot(est.se_shadow, est.se_rhs)
        res.check(f"shadow identity (Monte Carlo) {lab}",
                  distance_report(gap / se if se > 0 else 0.0, est.n_base, tol["identity_se"],
                                  "|mu-hat(B') - mu-hat(B & {r_A <= r_B})| in standard errors"))
        exact_shadow = _pl_shadow_mass(m, A, B) if isinstance(m, PiecewiseLinearMarkov) else None
        shadow = exact_shadow if exact_shadow is not None else est.shadow_mass
        base_mass = (A.hi - A.lo) if isinstance(m, PiecewiseLinearMarkov) else est.base_mass
        mass_shadow_A = shadow / base_mass
        with res.timed(f"pairs {lab}"):
            pairs = first_interarrival_pairs(m, A, B, run["n_starts"], B.mass, mass_shadow_A,
                                             sub_seed(cfg["seed"], f"pairs/{i}"), meas, run["cap"])
        res.check(f"original vs induced first interarrival {lab}",
                  two_sample_ks(pairs.original, pairs.induced, tol["ks2"],
                                "two-sample KS: mu(B) r_B vs mu_A(B') j from common starts in A"))
        hyp = hyp_diagnostics(m, A, B, meas, tol["hyp_eps"], run["cap"], threads=cfg["threads"])
        res.censoring[f"pairs {lab}"] = pairs.censored / run["n_starts"]
        res.censoring[f"shadow {lab}"] = est.censored / max(est.n_base + est.n_target, 1)
        res.values[lab] = {
            "target": B.to_dict(), "shadow_mass": shadow, "shadow_mass_exact": exact_shadow is not None,
            "shadow_mass_mc": est.shadow_mass, "identity_rhs_mc": est.identity_rhs,
            "mass_shadow_in_base": mass_shadow_A, "h1": hyp.h1, "h2": hyp.h2, "hyp_eps": hyp.eps,
            "mean_original": float(np.mean(pairs.original)), "mean_induced": float(np.mean(pairs.induced)),
        }
        res.curve(f"interarrival_cdf_{i}", ["x", "original", "induced"],
                  _cdf_rows([pairs.original, pairs.induced]),
                  f"x = normalized first interarrival; empirical CDFs at {lab}")


# ---------------------------------------------------------------------------
# dichotomy (quadratic and doubly intermittent)


def _end_indices(hits, p: int) -> list[np.ndarray]:
    out = []
    for c in hits.chunks:
        cl = extract_clusters(c, p)
        out.append(cl.starts + (cl.sizes - 1) * p)
    return out


def _cluster_histogram(sizes: np.ndarray, theta: float, kmax: int) -> list[list]:
    emp = np.bincount(np.minimum(sizes, kmax + 1), minlength=kmax + 2)[1:kmax + 1] / max(sizes.shape[0], 1)
    geo = geometric_pmf(theta, kmax)
    return [[k, float(emp[k - 1]), float(geo[k - 1])] for k in range(1, kmax + 1)]


def _simulate(m, B, cfg, res, label, idx):
    run = cfg["run"]
    with res.timed(f"orbit {label}"):
        hits = simulate_hits(m, B, int(run["orbit_length"]), sub_seed(cfg["seed"], f"orbit/{idx}"),
                             int(run["chunks"]), int(run["burn_in"]), cfg["threads"])
    res.values.setdefault(label, {})["orbit_restarts"] = hits.restarts
    return hits


def _periodic_case(m, B, meas, cfg, res, idx, neutral_rows):
    tol, run = cfg["tolerances"], cfg["run"]
    lab = _label(B.mass)
    p = B.period
    hits = _simulate(m, B, cfg, res, lab, idx)
    clusters = clusters_from_chunks(hits, p)
    with res.timed(f"annuli {lab}"):
        prof = annulus_profile(m, B, meas, int(run["max_depth"]), with_entrance=False, threads=cfg["threads"])
    vals = res.values[lab]
    vals.update({"target": B.to_dict(), "hits": hits.n_hits, "clusters": clusters.n_clusters,
                 "target_samples": prof.n_target, "core_samples": prof.core})
    res.censoring[f"annulus core {lab}"] = prof.core / max(prof.n_target, 1)
    try:
        est = theta_estimates(m, B, meas, clusters, prof, cfg["threads"])
    except InsufficientData as exc:
        vals["theta_error"] = str(exc)
        est = None
    theo = est.theoretical if est is not None else None
    if est is not None:
        res.theta.append({"label": lab, "mass": B.mass, "r": B.r, **est.to_dict()})
    ratio = prof.ratio if prof.n_target else math.nan
    neutral = theo is not None and theo == 0.0
    if neutral:
        neutral_rows.append((B.mass, B.r, ratio, hits, p))
        return
    if est is None:
        res.check(f"theta estimable {lab}", _lower_bound(clusters.n_clusters, 500, clusters.n_clusters,
                                                         "clusters available for the theta estimates"))
        return
    res.check(f"theta ratio {lab}", interval_report(est.ratio, theo, tol["theta"], est.n_target_samples,
                                                    f"|mu(Q)/mu(B) - theta| with theta = {theo:.6g}"))
    res.check(f"theta cluster fit {lab}", interval_report(est.cluster_fit, theo, tol["theta"], est.n_clusters,
                                                          f"|1/mean cluster size - theta| with theta = {theo:.6g}"))
    kmax = int(tol["kmax"])
    if 0 < theo < 1:
        res.check(f"cluster sizes geometric {lab}",
                  geometric_tv(clusters.sizes, theo, kmax, tol["tv"]))
        res.curve(f"cluster_sizes_{idx}", ["k", "empirical", "geometric"],
                  _cluster_histogram(clusters.sizes, theo, kmax),
                  f"k = cluster size; empirical frequency; geometric = theta (1 - theta)^(k - 1), {lab}")
    # conditioned return times carry an atom of mass 1 - theta at 0
    xb = stratified(meas.slice_open(B.lo, B.hi), int(run["max_returns"]))
    with res.timed(f"returns {lab}"):
        r = hitting_times(m, B, xb, int(run["cap"]), cfg["threads"])
    ok = r > 0
    res.censoring[f"returns {lab}"] = float(np.mean(~ok)) if r.shape[0] else 0.0
    eps = tol["eps_factor"] * p * B.mass
    frac = zero_mass_fraction(B.mass * r[ok], eps)
    # the compound-Poisson limit puts 1 - theta at 0 plus theta * Exp(theta) mass below eps
    limit = (1 - theo) + theo * (1 - math.exp(-theo * eps))
    res.check(f"return-time atom {lab}",
              interval_report(frac, limit, tol["zero_mass"], int(ok.sum()),
                              f"fraction of mu(B) r_B below {eps:.3g} vs its limit {limit:.4g} "
                              f"(atom 1 - theta = {1 - theo:.4g})"))
    vals["zero_mass_fraction"] = frac
    vals["zero_mass_eps"] = eps


def _neutral_reports(rows, cfg, res) -> None:
    tol = cfg["tolerances"]
    ratios = [r[2] for r in rows]
    res.curve("neutral_ratio", ["mass", "r", "ratio"], [[a, b, c] for a, b, c, _, _ in rows],
              "mass = target mass; r = radius; ratio = mu-hat(Q)/mu-hat(B) at a neutral point")
    res.check("neutral ratio at smallest target",
              bound_report(ratios[-1], tol["neutral_theta_max"], len(rows), "mu(Q)/mu(B) at the smallest target"))
    if len(ratios) > 1:
        worst = max(b - a for a, b in zip(ratios, ratios[1:]))
        res.check("neutral ratio strictly decreasing",
                  TestReport(worst, len(ratios), 0.0, bool(worst < 0), "max increase of the ratio along "
                             "the schedule (must be < 0)", kind="strict-upper-bound"))
    mass, r, ratio, hits, p = rows[-1]
    lab = _label(mass)
    q_mass = ratio * mass
    window = int(round(1.0 / q_mass))
    ends = _end_indices(hits, p)
    counts = window_counts(hits, window, ends)
    res.check(f"Q-process dispersion {lab}",
              poisson_dispersion(counts, tol["dispersion"], "variance/mean of cluster-end counts, window 1/mu(Q)"))
    raw = window_counts(hits, window)
    res.values[lab]["raw_hit_dispersion"] = dispersion_ratio(raw)
    res.values[lab]["q_window"] = window


def _nonperiodic_case(m, B, meas, cfg, res, idx):
    tol, run = cfg["tolerances"], cfg["run"]
    lab = _label(B.mass)
    rng = np.random.default_rng(sub_seed(cfg["seed"], f"starts/{idx}"))
    starts = np.sort(rng.choice(meas.samples, size=int(run["hitting_starts"]), replace=False))
    with res.timed(f"hitting {lab}"):
        r = hitting_times(m, B, starts, int(run["cap"]), cfg["threads"])
    ok = r > 0
    res.censoring[f"hitting {lab}"] = float(np.mean(~ok))
    x = B.mass * r[ok]
    res.check(f"hitting times exponential {lab}",
              ks_distance(x, "exp", tol["ks"], "KS distance of mu(B) r_B (start ~ mu) to Exp(1)"))
    res.curve(f"hitting_cdf_{idx}", ["x", "empirical", "exponential"],
              [[row[0], row[1], float(1 - math.exp(-row[0]))] for row in _cdf_rows([x])],
              f"x = normalized hitting time; empirical CDF vs 1 - exp(-x), {lab}")
    hits = _simulate(m, B, cfg, res, lab, idx)
    window = int(round(1.0 / B.mass))
    counts = window_counts(hits, window)
    res.check(f"hit-count dispersion {lab}",
              poisson_dispersion(counts, tol["dispersion"], "variance/mean of hit counts in windows of 1/mu(B) steps"))
    res.values[lab].update({"target": B.to_dict(), "hits": hits.n_hits, "mean_window_count": float(counts.mean())})


def run_dichotomy(cfg: dict, res: Results, family) -> None:
    m = build_map(cfg)
    if not isinstance(m, family):
        raise ConfigInvalid(f"{res.scenario} needs a {family.__name__} map")
    tol = cfg["tolerances"]
    zeta, period = resolve_point(m, cfg["target"])
    res.values["zeta"] = zeta
    res.values["period"] = period
    if period is None:
        nmax = int(cfg["target"]["nonperiodic_max"])
        y, closest = zeta, math.inf
        for _ in range(nmax):
            y = iterate_n(m, y, 1)
            closest = min(closest, abs(y - zeta))
        res.check("zeta not periodic", _lower_bound(closest, 1e-8, nmax,
                                                    f"min_(q <= {nmax}) |T^q(zeta) - zeta|"))
    else:
        d = deriv_along_orbit(m, zeta, period)
        res.values["derivative"] = d
        fd = finite_difference(m, zeta, period)
        res.values["derivative_fd"] = fd
        # at a neutral end T is only C^(1+l), so difference quotients converge like h^l
        if not (isinstance(m, DoublyIntermittent) and abs(zeta) == 1.0):
            res.check("orbit derivative vs finite difference",
                      distance_report(abs(fd / d - 1.0), period, tol["fd_rel"],
                                      "relative error of (T^p)'(zeta) against a difference quotient"))
    meas = build_measure(m, cfg, res)
    targets = targets_for(m, cfg, meas, zeta, period)
    neutral_rows: list = []
    for idx, B in enumerate(targets):
        if period is None:
            _nonperiodic_case(m, B, meas, cfg, res, idx)
        else:
            _periodic_case(m, B, meas, cfg, res, idx, neutral_rows)
    if neutral_rows:
        _neutral_reports(neutral_rows, cfg, res)
    if res.theta:
        res.curve("theta_schedule", ["mass", "r", "theoretical", "ratio", "ratio_se", "cluster_fit",
                                     "cluster_fit_se"],
                  [[t["mass"], t["r"], t["theoretical"], t["ratio"], t["ratio_se"], t["cluster_fit"],
                    t["cluster_fit_se"]] for t in res.theta],
                  "extremal-index estimates along the target schedule")


# ---------------------------------------------------------------------------
# cluster-reconstruction


def run_clusters(cfg: dict, res: Results) -> None:
    m = build_map(cfg)
    tol, run = cfg["tolerances"], cfg["run"]
    zeta, period = resolve_point(m, cfg["target"])
    if period is None:
        raise ConfigInvalid("cluster-reconstruction needs a periodic target")
    meas = build_measure(m, cfg, res)
    for idx, B in enumerate(targets_for(m, cfg, meas, zeta, period)):
        lab = _label(B.mass)
        p = B.period
        hits = _simulate(m, B, cfg, res, lab, idx)
        clusters = clusters_from_chunks(hits, p)
        with res.timed(f"annuli {lab}"):
            prof = annulus_profile(m, B, meas, int(run["max_depth"]), True, cfg["threads"])
        est = theta_estimates(m, B, meas, clusters, prof, cfg["threads"])
        res.theta.append({"label": lab, "mass": B.mass, "r": B.r, **est.to_dict()})
        theo = est.theoretical
        nc = clusters.n_clusters
        res.check(f"cluster count {lab}", _lower_bound(nc, tol["min_clusters"], nc, "clusters in the orbit"))
        kmax = int(tol["kmax"])
        res.check(f"cluster sizes geometric {lab}", geometric_tv(clusters.sizes, theo, kmax, tol["tv"]))
        res.curve(f"cluster_sizes_{idx}", ["k", "empirical", "geometric"],
                  _cluster_histogram(clusters.sizes, theo, kmax),
                  f"k = cluster size; empirical frequency; geometric = theta (1 - theta)^(k - 1), {lab}")
        # P(K >= k) against the annulus ratios mu(Q_{k-1}) / mu(Q_0)
        rows, zs = [], []
        c0 = prof.counts[0]
        for k in range(1, int(tol["kmax_tail"]) + 1):
            emp = float(np.mean(clusters.sizes >= k))
            ck = prof.counts[k - 1]
            g = ck / c0
            se = math.sqrt(emp * (1 - emp) / nc + (g * g * (1 / ck + 1 / c0) if k > 1 and ck > 0 else 0.0))
            zs.append(abs(emp - g) / se if se > 0 else 0.0)
            rows.append([k, emp, g, se])
        res.check(f"P(K >= k) vs annulus ratios {lab}",
                  distance_report(max(zs), nc, tol["tail_se"],
                                  "max_k |P(K >= k) - mu(Q_(k-1))/mu(Q_0)| in standard errors"))
        res.curve(f"cluster_tail_{idx}", ["k", "empirical", "annulus", "se"], rows,
                  f"k; empirical P(K >= k); annulus = mu-hat(Q_(k-1))/mu-hat(Q_0); se = combined SE, {lab}")
        # entrances and escapes carry the same mass
        n = meas.n_samples
        e_hat, q_hat = prof.entrance / n, c0 / n
        se = math.sqrt((prof.entrance + c0)) / n
        res.check(f"entrance mass equals escape mass {lab}",
                  distance_report(abs(e_hat - q_hat) / se, n, tol["entrance_se"],
                                  "|mu-hat(E(B)) - mu-hat(Q(B))| in standard errors"))
        # annulus index agrees with the number of later gap-p hits along the orbit
        xb = stratified(meas.slice_open(B.lo, B.hi), int(run["consistency_samples"]))
        k_ann = annulus_indices(m, B, xb, int(run["max_depth"]), cfg["threads"])
        horizon = (int(run["max_depth"]) + 2) * p
        mism = 0
        for x, k in zip(xb, k_ann):
            if k < 0:
                continue
            h = hit_times(m, float(x), B, horizon).hit_indices
            later = extract_clusters(h, p).sizes[0] - 1
            mism += int(later != k)
        res.check(f"annulus index matches cluster continuation {lab}",
                  bound_report(mism, 0, xb.shape[0], "points of B whose annulus index differs from the "
                               "number of later gap-p hits"))
        # cluster sizes independent of the following gap
        gaps = np.concatenate([extract_clusters(c, p).inter_cluster_gaps() for c in hits.chunks])
        sizes = np.concatenate([extract_clusters(c, p).sizes[:-1] for c in hits.chunks])
        corr = sample_correlation(sizes, gaps)
        res.check(f"size/gap correlation {lab}",
                  distance_report(abs(corr), sizes.shape[0], tol["correlation"],
                                  "|corr(cluster size, following inter-cluster gap)|"))
        # cluster starts are Poisson with intensity theta; all hits are compound Poisson
        window = int(round(1.0 / B.mass))
        starts = [extract_clusters(c, p).starts for c in hits.chunks]
        res.check(f"cluster-start dispersion {lab}",
                  poisson_dispersion(window_counts(hits, window, starts), tol["dispersion"],
                                     "variance/mean of cluster-start counts in windows of 1/mu(B) steps"))
        cp = (2 - theo) / theo
        raw = dispersion_ratio(window_counts(hits, window))
        res.check(f"hit-count dispersion is compound Poisson {lab}",
                  distance_report(abs(raw / cp - 1.0), nc, tol["dispersion"],
                                  f"|variance/mean of hit counts / {cp:.4g} - 1| (geometric compound Poisson)"))
        res.values[lab] = {**res.values.get(lab, {}), "target": B.to_dict(), "hits": hits.n_hits,
                           "clusters": nc, "entrance_mass": e_hat, "escape_mass": q_hat,
                           "size_gap_correlation": corr, "hit_dispersion": raw}


# ---------------------------------------------------------------------------
# tails


def _tail_grid(run: dict) -> list[int]:
    g = np.unique(np.round(np.geomspace(run["t_min"], run["t_max"], run["points"])).astype(np.int64))
    return [int(t) for t in g]


def run_tails(cfg: dict, res: Results) -> None:
    m = build_map(cfg)
    tol, run = cfg["tolerances"], cfg["run"]
    A = build_base(m, cfg["base"])
    res.values["base"] = A.to_dict()
    meas = build_measure(m, cfg, res)
    grid = _tail_grid(run)
    fit = tuple(run["fit_range"])
    with res.timed("empirical tail"):
        emp = return_tail(m, A, meas, grid, fit, int(run["cap"]), int(run["max_starts"]) or None, cfg["threads"])
    res.censoring["returns"] = emp.censored_fraction
    res.check("return-time censoring", bound_report(emp.censored_fraction, tol["censoring"], emp.n,
                                                    "fraction of excursions reaching the cap"))
    res.values["empirical_tail"] = emp.to_dict()
    res.curve("tail_empirical", ["t", "tail", "ci_lo", "ci_hi"], emp.rows(),
              "t = return time; tail = empirical mu_A(r_A > t); ci = 95% Wilson interval")
    if isinstance(m, DoublyIntermittent):
        side = 1 if cfg["base"]["kind"] == "delta0+" else -1
        with res.timed("partition tail"):
            part = partition_tail(m, meas, grid, side, int(run["bins"]), fit)
        res.values["partition_tail"] = part.to_dict()
        res.curve("tail_partition", ["t", "tail", "ci_lo", "ci_hi"], part.rows(),
                  "t = return time; tail = semi-analytic mu_A(r_A > t); ci = +-2 histogram standard errors")
        res.check("log-log tail slope", bound_report(part.loglog_slope, tol["slope_max"], part.n,
                                                     f"fitted log-log slope over t in [{fit[0]}, {fit[1]}] "
                                                     f"(theory {-1 / m.beta:g})"))
        # both estimators where the Monte Carlo tail is resolved
        k = emp.tail * emp.n
        sel = k >= run["min_count"]
        se_e = (emp.ci_hi - emp.ci_lo) / (2 * 1.96)
        se_p = (part.ci_hi - part.ci_lo) / 4
        z = np.abs(emp.tail - part.tail) / np.sqrt(se_e**2 + se_p**2)
        res.check("partition tail agrees with empirical tail",
                  distance_report(float(np.max(z[sel])) if sel.any() else 0.0, int(sel.sum()),
                                  tol["agreement_se"], "max |empirical - partition| in combined standard "
                                  f"errors where at least {run['min_count']} returns exceed t"))
        emp_slope = [t for t, kk in zip(emp.t, k) if kk >= run["min_count"] and t >= fit[0]]
        res.values["empirical_resolved_t_max"] = int(max(emp_slope)) if emp_slope else None
    else:
        res.check("exponential tail", _lower_bound(emp.loglin_r2, tol["loglin_r2"], emp.n,
                                                   f"R^2 of log tail against t over [{fit[0]}, {fit[1]}]"))


# ---------------------------------------------------------------------------
# dispatch


def run(name: str, cfg: dict) -> Results:
    res = Results(name, cfg)
    with res.timed("total"):
        if name == "oracle-validate":
            run_oracle_validate(cfg, res)
        elif name == "inducing-equivalence":
            run_inducing(cfg, res)
        elif name == "dichotomy-mis":
            run_dichotomy(cfg, res, QuadraticMis)
        elif name == "dichotomy-di":
            run_dichotomy(cfg, res, DoublyIntermittent)
        elif name == "cluster-reconstruction":
            run_clusters(cfg, res)
        elif name == "tails":
            run_tails(cfg, res)
        else:
            raise ConfigInvalid(f"unknown scenario {name!r}")
    res.values["map"] = map_to_config(build_map(cfg))
    return res
