"""Critical-point calculus for polymers on degree-ell trees.

Closed forms built from the law's Laplace transform: the annealed critical
point h_a, the criterion function f whose root beta_c separates weak from
strong disorder, the one-step fractional-moment factor r(theta) with its
derivatives, the optimizing exponents theta_c and theta_1, the quenched
critical point h_q, the fractional-moment upper bound on E[Z_n^theta],
and the exact second moment E[Z_n^2].

Conventions: mu = ell - 1 is the connective constant, c_n = ell*(ell-1)^(n-1)
counts the n-step self-avoiding walks from the root.  Operations tied to
the strong-disorder machinery require ell >= 3 (ell = 2 degenerates to the
line, where the entropy log(ell-1) vanishes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .laws import ConductanceLaw, TransformDivergenceError

__all__ = [
    "RegimeError",
    "CriticalParams",
    "mu",
    "saw_count",
    "tree_edge_count",
    "annealed_critical_point",
    "annealed_slope",
    "f_criterion",
    "beta_c",
    "r_theta",
    "log_r",
    "log_r_derivatives",
    "theta_c",
    "minimize_rate",
    "minimize_log_r",
    "theta_1",
    "quenched_critical_point",
    "fractional_moment_bound",
    "second_moment_closed_form",
    "critical_params",
    "golden_section_min",
]

BETA_C_CEILING = 128.0
ROOT_TOL = 1e-12


class RegimeError(ValueError):
    """Operation called outside its disorder regime."""


def mu(ell):
    """Connective constant of the degree-ell tree."""
    _check_ell(ell, 2)
    return ell - 1


def saw_count(ell, n):
    """c_n: number of n-step self-avoiding walks from the root."""
    _check_ell(ell, 2)
    if n < 0:
        raise ValueError(f"n must be >= 0: {n}")
    return 1 if n == 0 else ell * (ell - 1) ** (n - 1)


def tree_edge_count(ell, n):
    """Number of edges within distance n of the root."""
    return sum(saw_count(ell, d) for d in range(1, n + 1))


def _check_ell(ell, minimum):
    if int(ell) != ell or ell < minimum:
        raise ValueError(f"ell must be an integer >= {minimum}: {ell!r}")


def _check_beta(beta):
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0: {beta!r}")


def annealed_critical_point(law, beta, ell):
    """h_a(beta) = log(ell-1) + log E[e^{-beta X}]."""
    _check_ell(ell, 2)
    return math.log(ell - 1) + law.log_laplace(beta)


def annealed_slope(law, beta):
    """d/dbeta of log lambda_beta, i.e. -E[X e^{-beta X}] / lambda_beta."""
    law._require(beta)
    d1, _ = law.laplace_derivatives(beta)
    return -d1 / law.laplace(beta)


def f_criterion(law, beta, ell):
    """f(beta) = h_a(beta) - beta * h_a'(beta); its root is beta_c."""
    _check_ell(ell, 2)
    _check_beta(beta)
    return annealed_critical_point(law, beta, ell) - beta * annealed_slope(law, beta)


def beta_c(law, ell, *, ceiling=BETA_C_CEILING):
    """Root of f on (0, inf), or math.inf when f stays positive up to `ceiling`.

    f(0) = log(ell-1) > 0 and f is decreasing, so the bracket is found by
    doubling; Brent iteration then converges to ~1e-12.  Degenerate laws
    (Constant) have f identically log(ell-1) and report an infinite
    critical point.
    """
    _check_ell(ell, 3)

    def f(b):
        return f_criterion(law, b, ell)

    lo, hi = 0.0, 1.0
    try:
        while f(hi) > 0.0:
            if hi >= ceiling:
                return math.inf
            lo, hi = hi, min(2.0 * hi, ceiling)
    except TransformDivergenceError as exc:
        raise TransformDivergenceError(
            f"f not evaluable beyond beta={lo} (weak disorder verified on [0,{lo}]): {exc}"
        ) from None
    root = brentq(f, lo, hi, xtol=ROOT_TOL, rtol=8.9e-16)
    return float(root)


def r_theta(law, beta, theta, ell):
    """r(theta) = (ell-1) * lambda_{theta*beta} / ((ell-1)^theta * lambda_beta^theta)."""
    _check_ell(ell, 2)
    m = ell - 1
    return m * law.laplace(theta * beta) / (m ** theta * law.laplace(beta) ** theta)


def log_r(law, beta, theta, ell):
    """log r(theta) = h_a(theta*beta) - theta * h_a(beta)."""
    return annealed_critical_point(law, theta * beta, ell) - theta * annealed_critical_point(
        law, beta, ell
    )


def log_r_derivatives(law, beta, theta, ell):
    """First and second theta-derivatives of log r; the second is >= 0."""
    _check_ell(ell, 2)
    g = theta * beta
    law._require(g)
    lam = law.laplace(g)
    d1, d2 = law.laplace_derivatives(g)
    first = -beta * d1 / lam - annealed_critical_point(law, beta, ell)
    second = beta ** 2 * (d2 / lam - (d1 / lam) ** 2)
    return (first, second)


def theta_c(law, beta, ell):
    """theta_c = beta_c / beta, the stationary point of (1/theta) log r(theta).

    Only defined in strong disorder: in the weak regime the ratio exceeds 1
    and the quenched critical point is the annealed one.
    """
    _check_ell(ell, 3)
    _check_beta(beta)
    bc = beta_c(law, ell)
    if not math.isfinite(bc):
        raise RegimeError("beta_c is infinite: weak disorder at every beta")
    if beta <= 0.0:
        raise ValueError("theta_c needs beta > 0")
    if beta < bc:
        raise RegimeError(
            f"weak disorder (beta={beta} < beta_c={bc}): h_q equals h_a, no theta_c"
        )
    return bc / beta


def golden_section_min(f, lo, hi, *, tol=1e-10, max_iter=200):
    """Golden-section minimizer for a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol and it < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        it += 1
    return 0.5 * (a + b)


def minimize_rate(law, beta, ell, *, lo=1e-6, tol=1e-10):
    """Numeric minimizer of (1/theta) log r(theta) on (0, 1]: cross-check for theta_c."""
    _check_ell(ell, 3)
    return golden_section_min(lambda t: log_r(law, beta, t, ell) / t, lo, 1.0, tol=tol)


def minimize_log_r(law, beta, ell, *, lo=1e-9, tol=1e-10):
    """Numeric minimizer of log r(theta) itself on (0, 1]."""
    _check_ell(ell, 3)
    return golden_section_min(lambda t: log_r(law, beta, t, ell), lo, 1.0, tol=tol)


def theta_1(law, beta, ell, *, tol=1e-12):
    """Smaller zero of log r on (0, 1); None in weak disorder.

    log r is convex with log r(0) = log(ell-1) > 0 and log r(1) = 0, so it
    dips below zero on (theta_1, 1) exactly when the slope at 1 is positive,
    i.e. in strong disorder.
    """
    _check_ell(ell, 3)
    _check_beta(beta)
    t_min = minimize_log_r(law, beta, ell)
    if log_r(law, beta, t_min, ell) >= -1e-13:
        return None
    root = brentq(lambda t: log_r(law, beta, t, ell), 1e-12, t_min, xtol=tol, rtol=8.9e-16)
    return float(root)


def quenched_critical_point(law, beta, ell):
    """h_q: equals h_a below beta_c, then continues linearly in beta above it."""
    _check_ell(ell, 3)
    _check_beta(beta)
    bc = beta_c(law, ell)
    if beta <= bc:
        return annealed_critical_point(law, beta, ell)
    return (beta / bc) * annealed_critical_point(law, bc, ell)


def fractional_moment_bound(law, beta, theta, n, ell):
    """(ell/(ell-1))^(1-theta) * r(theta)^n, the upper bound on E[Z_n^theta]."""
    _check_ell(ell, 2)
    if not (0.0 < theta <= 1.0):
        raise ValueError(f"theta must be in (0,1]: {theta!r}")
    if n < 0:
        raise ValueError(f"n must be >= 0: {n}")
    base = (ell / (ell - 1.0)) ** (1.0 - theta)
    return base * math.exp(n * log_r(law, beta, theta, ell))


def second_moment_closed_form(law, beta, n, ell):
    """Exact E[Z_n^2] from the overlap decomposition on the tree.

    Two n-step walks from the root share a prefix of k edges; counting the
    walks with overlap exactly k and integrating the shared edges with
    lambda_{2 beta} gives

        E[Z_n^2] = (ell-1)/ell + (ell-2)/ell * sum_{k=1}^{n-1} r(2)^k
                   + (ell-1)/ell * r(2)^n,

    where r(2) = lambda_{2 beta} / ((ell-1) lambda_beta^2).  The constant
    first term is the zero-overlap contribution.  Validated against the
    exhaustive oracle at small n.
    """
    _check_ell(ell, 3)
    _check_beta(beta)
    if n < 0:
        raise ValueError(f"n must be >= 0: {n}")
    if n == 0:
        return 1.0
    r2 = r_theta(law, beta, 2.0, ell)
    if abs(r2 - 1.0) < 1e-12:
        partial = float(n - 1)
    else:
        partial = r2 * (r2 ** (n - 1) - 1.0) / (r2 - 1.0)
    return (ell - 1.0) / ell + (ell - 2.0) / ell * partial + (ell - 1.0) / ell * r2 ** n


@dataclass(frozen=True)
class CriticalParams:
    """Derived constants for one (law, beta, ell) triple."""

    ell: int
    law: ConductanceLaw
    beta: float
    mu: int
    h_a: float
    f_value: float
    beta_c: float  # may be math.inf
    regime: str  # weak | critical | strong
    h_q: float
    r2: float
    theta_c: float | None  # beta_c/beta whenever beta > 0 and beta_c finite
    theta_1: float | None  # present only in strong disorder


def critical_params(law, beta, ell):
    """Assemble the CriticalParams record, enforcing the field invariants."""
    _check_ell(ell, 3)
    _check_beta(beta)
    law._require(2.0 * beta)  # r(2) must be evaluable for the record
    bc = beta_c(law, ell)
    if beta < bc:
        regime = "weak"
    elif beta == bc or abs(beta - bc) <= 1e-12 * max(1.0, bc):
        regime = "critical"
    else:
        regime = "strong"
    tc = bc / beta if (beta > 0.0 and math.isfinite(bc)) else None
    t1 = theta_1(law, beta, ell) if regime == "strong" else None
    return CriticalParams(
        ell=ell,
        law=law,
        beta=beta,
        mu=mu(ell),
        h_a=annealed_critical_point(law, beta, ell),
        f_value=f_criterion(law, beta, ell),
        beta_c=bc,
        regime=regime,
        h_q=quenched_critical_point(law, beta, ell),
        r2=r_theta(law, beta, 2.0, ell),
        theta_c=tc,
        theta_1=t1,
    )
