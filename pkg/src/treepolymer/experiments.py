"""Monte Carlo studies over many environments.

Replicas are fresh environments keyed by hash(master seed, replica index),
computed independently and assembled in replica order, so every report is
bit-identical across runs and worker counts.  Estimates always carry a
standard error, and every comparison names its theory reference and
tolerance (or confidence level).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import theory
from .engine import compute_profile, resolve_workers
from .environment import Environment, mix64
from .laws import TransformDivergenceError
from .theory import RegimeError

__all__ = [
    "ExperimentReport",
    "ZnSampleSet",
    "replica_seed",
    "zn_samples",
    "sample_set",
    "mc_fractional_moment",
    "mc_second_moment",
    "survival_probability",
    "phase_scan",
    "quenched_point_estimate",
    "weak_exponent_check",
]

_MASK = (1 << 64) - 1
_REPLICA_SALT = 0x9E6C63D0876A9A43

MIN_REPLICAS = 100  # every estimate must rest on at least this many replicas
Z95 = 1.959963984540054  # two-sided 95% normal quantile


def replica_seed(master, index):
    """Per-replica environment seed, a pure function of (master, index)."""
    return mix64(mix64(master ^ _REPLICA_SALT) ^ ((index * _REPLICA_SALT) & _MASK))


@dataclass
class ExperimentReport:
    """Per-point estimates plus named pass/fail checks, CSV/JSON emittable."""

    experiment: str
    params: dict
    columns: list
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def add_check(self, name, passed, *, reference, tolerance, observed):
        self.checks.append(
            {
                "name": name,
                "passed": bool(passed),
                "reference": reference,
                "tolerance": tolerance,
                "observed": observed,
            }
        )

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    @staticmethod
    def _cell(v):
        if v is None:
            return "nan"
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    def csv_text(self, config_note=""):
        head = " ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        first = f"# treepolymer experiment={self.experiment} {head} {config_note}".rstrip()
        lines = [first, ",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(self._cell(v) for v in row))
        return "\n".join(lines) + "\n"

    def summary(self):
        return {
            "experiment": self.experiment,
            "params": {k: str(v) for k, v in self.params.items()},
            "checks": self.checks,
            "passed": self.passed,
        }


def zn_samples(law, ell, beta, depth, replicas, seed, *, workers=None, work_budget=None):
    """Z_0..Z_depth over `replicas` fresh environments: array (replicas, depth+1).

    Each replica is a full exact profile on its own environment; replicas
    are independent, so the result does not depend on how the replica
    blocks are scheduled across workers.
    """
    if replicas < MIN_REPLICAS:
        raise ValueError(f"replicas must be >= {MIN_REPLICAS}: {replicas}")
    workers = resolve_workers(workers)

    def run_block(block):
        out = np.empty((len(block), depth + 1))
        for i, r in enumerate(block):
            env = Environment(law, replica_seed(seed, int(r)), ell)
            prof = compute_profile(env, beta, depth, workers=1, work_budget=work_budget)
            out[i] = prof.z
        return out

    indices = np.arange(replicas)
    if workers > 1:
        blocks = [b for b in np.array_split(indices, workers * 4) if len(b)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_block, blocks))
        return np.concatenate(parts, axis=0)
    return run_block(indices)


@dataclass
class ZnSampleSet:
    """Cached replica samples, shareable across several moment studies."""

    law: object
    ell: int
    beta: float
    depth: int
    replicas: int
    seed: int
    z: np.ndarray  # (replicas, depth+1)


def sample_set(law, ell, beta, depth, replicas, seed, *, workers=None):
    z = zn_samples(law, ell, beta, depth, replicas, seed, workers=workers)
    return ZnSampleSet(
        law=law, ell=ell, beta=beta, depth=depth, replicas=replicas, seed=seed, z=z
    )


def _take_samples(law, ell, beta, n_list, replicas, seed, workers, samples):
    if samples is None:
        samples = sample_set(law, ell, beta, max(n_list), replicas, seed, workers=workers)
    if (samples.law, samples.ell, samples.beta, samples.seed) != (law, ell, beta, seed):
        raise ValueError("sample set was drawn for a different instance")
    if samples.depth < max(n_list) or samples.replicas < replicas:
        raise ValueError("sample set does not cover the requested n range or replicas")
    return samples


def _fit_slope(ns, log_means):
    """OLS slope of log-mean versus n, with its standard error."""
    ns = np.asarray(ns, dtype=float)
    y = np.asarray(log_means, dtype=float)
    nbar = ns.mean()
    sxx = ((ns - nbar) ** 2).sum()
    slope = float(((ns - nbar) * (y - y.mean())).sum() / sxx)
    resid = y - (y.mean() + slope * (ns - nbar))
    dof = max(len(ns) - 2, 1)
    se = math.sqrt(float((resid ** 2).sum()) / dof / sxx)
    return slope, se


def mc_fractional_moment(
    law, ell, beta, theta, n_list, replicas, seed, *, workers=None, samples=None
):
    """Sample means of Z_n^theta against the fractional-moment bound.

    Per n: the estimate with its standard error and the reference bound
    (ell/(ell-1))^(1-theta) r(theta)^n, compared at 95% confidence.  Also
    fits the decay slope of log E[Z_n^theta] and compares it to
    log r(theta) within three slope standard errors.
    """
    if replicas < 1000:
        raise ValueError(f"mc_fractional_moment needs replicas >= 1000: {replicas}")
    if not (0.0 < theta <= 1.0):
        raise ValueError(f"theta must be in (0,1]: {theta}")
    n_list = sorted(int(n) for n in n_list)
    samples = _take_samples(law, ell, beta, n_list, replicas, seed, workers, samples)
    w = samples.z[:replicas, n_list] ** theta
    means = w.mean(axis=0)
    ses = w.std(axis=0, ddof=1) / math.sqrt(replicas)
    log_rt = theory.log_r(law, beta, theta, ell)

    report = ExperimentReport(
        experiment="mc_fractional_moment",
        params={
            "law": law.spec(),
            "ell": ell,
            "beta": beta,
            "theta": theta,
            "replicas": replicas,
            "seed": seed,
        },
        columns=["n", "estimate", "std_error", "bound", "within_95"],
    )
    ok_all = True
    for i, n in enumerate(n_list):
        bound = theory.fractional_moment_bound(law, beta, theta, n, ell)
        ok = means[i] - bound <= Z95 * ses[i]
        ok_all = ok_all and ok
        report.rows.append((n, float(means[i]), float(ses[i]), bound, int(ok)))
    report.add_check(
        "estimates_below_bound",
        ok_all,
        reference="fractional_moment_bound",
        tolerance="95% confidence",
        observed=float(np.max([r[1] - r[3] for r in report.rows])),
    )
    slope, slope_se = _fit_slope(n_list, np.log(means))
    report.add_check(
        "decay_slope_below_log_r",
        slope <= log_rt + 3.0 * slope_se,
        reference=f"log_r(theta)={log_rt!r}",
        tolerance="3 slope standard errors",
        observed=slope,
    )
    report.params["slope"] = slope
    report.params["slope_se"] = slope_se
    return report


def mc_second_moment(law, ell, beta, n_list, replicas, seed, *, workers=None, samples=None):
    """Sample means of Z_n^2 against the exact closed form.

    Checks agreement within four standard errors per n, fits the growth
    rate against log r(2), and labels the instance as L2-bounded
    (r(2) < 1) or divergent (r(2) > 1).
    """
    if replicas < MIN_REPLICAS:
        raise ValueError(f"replicas must be >= {MIN_REPLICAS}: {replicas}")
    law._require(2.0 * beta)
    n_list = sorted(int(n) for n in n_list)
    samples = _take_samples(law, ell, beta, n_list, replicas, seed, workers, samples)
    w = samples.z[:replicas, n_list] ** 2
    means = w.mean(axis=0)
    ses = w.std(axis=0, ddof=1) / math.sqrt(replicas)
    r2 = theory.r_theta(law, beta, 2.0, ell)
    log_r2 = theory.log_r(law, beta, 2.0, ell)

    report = ExperimentReport(
        experiment="mc_second_moment",
        params={
            "law": law.spec(),
            "ell": ell,
            "beta": beta,
            "replicas": replicas,
            "seed": seed,
            "r2": r2,
        },
        columns=["n", "estimate", "std_error", "closed_form", "within_4se"],
    )
    ok_all = True
    for i, n in enumerate(n_list):
        ref = theory.second_moment_closed_form(law, beta, n, ell)
        ok = abs(means[i] - ref) <= 4.0 * ses[i]
        ok_all = ok_all and ok
        report.rows.append((n, float(means[i]), float(ses[i]), ref, int(ok)))
    report.add_check(
        "matches_closed_form",
        ok_all,
        reference="second_moment_closed_form",
        tolerance="4 standard errors per n",
        observed=float(np.max(np.abs(means - [r[3] for r in report.rows]))),
    )
    slope, slope_se = _fit_slope(n_list, np.log(means))
    report.params["growth_rate"] = slope
    report.params["growth_rate_se"] = slope_se
    report.params["log_r2"] = log_r2
    report.params["divergent"] = bool(r2 > 1.0)
    report.params["l2_bounded"] = bool(r2 < 1.0)
    if r2 > 1.0:
        report.add_check(
            "growth_rate_near_log_r2",
            abs(slope - log_r2) <= 0.2 * abs(log_r2),
            reference=f"log_r(2)={log_r2!r}",
            tolerance="20% relative",
            observed=slope,
        )
    return report


def survival_probability(
    law, ell, beta, eps, n_list, replicas, seed, *, workers=None, samples=None, floor=0.01
):
    """Empirical P(Z_n > (r(theta_c) - eps)^(n/theta_c)) per n, with CIs.

    Strong disorder only.  The lower-bound argument for the quenched
    critical point needs this probability to stay strictly positive, so
    the report checks the estimates stay above `floor` across the range.
    """
    if replicas < MIN_REPLICAS:
        raise ValueError(f"replicas must be >= {MIN_REPLICAS}: {replicas}")
    tc = theory.theta_c(law, beta, ell)  # raises RegimeError in weak disorder
    if tc >= 1.0:
        raise RegimeError(f"beta={beta} is not in the strong-disorder regime")
    r_tc = theory.r_theta(law, beta, tc, ell)
    if not (0.0 < eps < r_tc):
        raise ValueError(f"eps must be in (0, r(theta_c)={r_tc}): {eps}")
    n_list = sorted(int(n) for n in n_list)
    samples = _take_samples(law, ell, beta, n_list, replicas, seed, workers, samples)
    log_base = math.log(r_tc - eps)

    report = ExperimentReport(
        experiment="survival_probability",
        params={
            "law": law.spec(),
            "ell": ell,
            "beta": beta,
            "eps": eps,
            "theta_c": tc,
            "r_theta_c": r_tc,
            "replicas": replicas,
            "seed": seed,
        },
        columns=["n", "threshold", "probability", "std_error"],
    )
    probs = []
    for n in n_list:
        thr = math.exp((n / tc) * log_base)
        p = float((samples.z[:replicas, n] > thr).mean())
        se = math.sqrt(max(p * (1.0 - p), 1.0 / replicas) / replicas)
        probs.append(p)
        report.rows.append((n, thr, p, se))
    report.add_check(
        "probability_floor",
        min(probs) > floor,
        reference=f"positive survival floor {floor}",
        tolerance="strict",
        observed=min(probs),
    )
    return report


def phase_scan(law, ell, beta_grid):
    """Table of h_a, f, regime, h_q, r(2) and the optimal exponents over beta.

    theta_c is reported as beta_c/beta (the stationarity value); the column
    theta_min_log_r holds the numeric minimizer of log r itself, recorded
    because the two readings differ for general laws.  Annotates the L2
    threshold (r(2) = 1) and the critical bracket.
    """
    if ell < 3:
        raise ValueError(f"phase_scan needs ell >= 3: {ell}")
    bc = theory.beta_c(law, ell)
    report = ExperimentReport(
        experiment="phase_scan",
        params={"law": law.spec(), "ell": ell, "beta_c": bc},
        columns=[
            "beta",
            "h_a",
            "f",
            "regime",
            "h_q",
            "r2",
            "theta_c",
            "theta_1",
            "theta_min_log_r",
            "note",
        ],
    )
    regimes = []
    for beta in beta_grid:
        beta = float(beta)
        note = ""
        try:
            h_a = theory.annealed_critical_point(law, beta, ell)
            f_val = theory.f_criterion(law, beta, ell)
            h_q = theory.quenched_critical_point(law, beta, ell)
        except TransformDivergenceError as exc:
            report.rows.append((beta, None, None, "divergent", None, None, None, None, None, str(exc)))
            regimes.append("divergent")
            continue
        try:
            r2 = theory.r_theta(law, beta, 2.0, ell)
        except TransformDivergenceError:
            r2, note = None, "lambda_2beta divergent"
        if beta < bc:
            regime = "weak"
        elif beta == bc:
            regime = "critical"
        else:
            regime = "strong"
        tc = bc / beta if (beta > 0.0 and math.isfinite(bc)) else None
        t1 = theory.theta_1(law, beta, ell) if regime == "strong" else None
        tmin = theory.minimize_log_r(law, beta, ell) if regime == "strong" else None
        if r2 is not None and r2 > 1.0 and not note:
            note = "L2 divergent"
        regimes.append(regime)
        report.rows.append((beta, h_a, f_val, regime, h_q, r2, tc, t1, tmin, note))
    flips = sum(1 for a, b in zip(regimes, regimes[1:]) if a != b)
    report.params["regime_flips"] = flips
    report.add_check(
        "single_regime_flip",
        flips <= (1 if math.isfinite(bc) else 0) + regimes.count("critical"),
        reference=f"beta_c={bc!r}",
        tolerance="exact",
        observed=flips,
    )
    return report


def quenched_point_estimate(law, ell, beta, depth, replicas, seed, *, workers=None):
    """Free-energy estimates at depth/2 and depth versus the theory h_q.

    Convergence of the free energy is slow, so only the ordering is
    asserted: the estimate sits below h_q and the gap shrinks with depth.
    """
    if replicas < MIN_REPLICAS:
        raise ValueError(f"replicas must be >= {MIN_REPLICAS}: {replicas}")
    if depth < 2:
        raise ValueError(f"depth must be >= 2: {depth}")
    h_q = theory.quenched_critical_point(law, beta, ell)
    workers = resolve_workers(workers)
    half = depth // 2

    def run_block(block):
        out = np.empty((len(block), 2))
        for i, r in enumerate(block):
            env = Environment(law, replica_seed(seed, int(r)), ell)
            prof = compute_profile(env, beta, depth, workers=1)
            out[i, 0] = prof.free_energy[half]
            out[i, 1] = prof.free_energy[depth]
        return out

    indices = np.arange(replicas)
    if workers > 1:
        blocks = [b for b in np.array_split(indices, workers * 4) if len(b)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fe = np.concatenate(list(pool.map(run_block, blocks)), axis=0)
    else:
        fe = run_block(indices)

    report = ExperimentReport(
        experiment="quenched_point_estimate",
        params={
            "law": law.spec(),
            "ell": ell,
            "beta": beta,
            "depth": depth,
            "replicas": replicas,
            "seed": seed,
            "h_q": h_q,
        },
        columns=["depth", "mean_free_energy", "std_error", "h_q_reference", "gap"],
    )
    gaps = []
    for j, d in enumerate((half, depth)):
        mean = float(fe[:, j].mean())
        se = float(fe[:, j].std(ddof=1) / math.sqrt(replicas))
        gaps.append(h_q - mean)
        report.rows.append((d, mean, se, h_q, h_q - mean))
    report.add_check(
        "estimate_below_h_q",
        gaps[1] > 0.0,
        reference="quenched_critical_point",
        tolerance="ordering only",
        observed=gaps[1],
    )
    report.add_check(
        "gap_shrinks_with_depth",
        gaps[1] < gaps[0],
        reference="quenched_critical_point",
        tolerance="ordering only",
        observed=gaps[1] - gaps[0],
    )
    return report


def weak_exponent_check(
    law,
    ell,
    beta,
    delta_grid,
    seed,
    *,
    profile_depth=20,
    horizon=30.0,
    workers=None,
    max_ratio=10.0,
):
    """(h - h_a) * S_N products across a delta grid, on one fixed environment.

    The susceptibility at h = h_a + delta needs about 30/delta terms to
    resolve; Z_n is exact up to `profile_depth` and held at its deepest
    computed value beyond (the martingale has essentially converged in
    weak disorder), with the remaining geometric tail summed in closed
    form.  A bounded max/min ratio of the products across the grid is the
    critical-exponent-one signature; the constants themselves are random.
    """
    bc = theory.beta_c(law, ell)
    if not beta < bc:
        raise RegimeError(f"weak disorder required: beta={beta} >= beta_c={bc}")
    deltas = [float(d) for d in delta_grid]
    if any(d <= 0.0 for d in deltas):
        raise ValueError(f"deltas must be > 0: {deltas}")
    env = Environment(law, seed, ell)
    prof = compute_profile(env, beta, profile_depth, workers=workers)
    zs = prof.z
    kappa = ell / (ell - 1.0)

    report = ExperimentReport(
        experiment="weak_exponent_check",
        params={
            "law": law.spec(),
            "ell": ell,
            "beta": beta,
            "seed": seed,
            "profile_depth": profile_depth,
            "horizon": horizon,
        },
        columns=["delta", "n_terms", "product"],
    )
    products = []
    for d in deltas:
        n_terms = max(profile_depth, int(math.ceil(horizon / d)))
        head = sum(math.exp(-d * n) * zs[n] for n in range(1, profile_depth + 1))
        # plateau tail: Z_n frozen at its deepest exact value, geometric sum
        q = math.exp(-d)
        tail = zs[profile_depth] * (q ** (profile_depth + 1) - q ** (n_terms + 1)) / (1.0 - q)
        s = 1.0 + kappa * (head + tail)
        products.append(d * s)
        report.rows.append((d, n_terms, d * s))
    ratio = max(products) / min(products)
    report.params["product_ratio"] = ratio
    report.add_check(
        "product_ratio_bounded",
        ratio < max_ratio,
        reference="susceptibility critical exponent 1",
        tolerance=f"max/min < {max_ratio}",
        observed=ratio,
    )
    return report
