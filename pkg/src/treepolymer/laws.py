"""Conductance laws: the distributions of the i.i.d. edge variables.

Every law carries closed forms for the Laplace transform E[e^{-beta X}],
its log, and the weighted moments E[X e^{-beta X}], E[X^2 e^{-beta X}].
No numeric integration is used anywhere, which removes a whole tolerance
class from downstream checks.  Laws also expose a quantile function (one
uniform in, one sample out, no rejection) and a CDF for goodness-of-fit
tests.

Law specification grammar, used by config files and the CLI:

    twopoint:a,b,p        P(X=a)=p, P(X=b)=1-p
    discrete:v1:p1,v2:p2,...
    gaussian:mean,stdev
    exponential:rate
    constant:x0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "ConductanceLaw",
    "TwoPoint",
    "FiniteDiscrete",
    "Gaussian",
    "Exponential",
    "Constant",
    "TransformDivergenceError",
    "LawSpecError",
    "parse_law",
    "PROB_TOL",
]

PROB_TOL = 1e-12


class TransformDivergenceError(ValueError):
    """The Laplace transform does not exist at the requested beta."""


class LawSpecError(ValueError):
    """Malformed law specification string."""


@dataclass(frozen=True)
class ConductanceLaw:
    """Common interface; concrete laws supply the closed forms."""

    def exists(self, beta):
        """Whether E[e^{-beta X}] (and the weighted moments) are finite."""
        return True

    def _require(self, beta):
        if not self.exists(beta):
            raise TransformDivergenceError(
                f"{self.spec()}: Laplace transform diverges at beta={beta!r}"
            )

    def laplace(self, beta):
        raise NotImplementedError

    def log_laplace(self, beta):
        raise NotImplementedError

    def laplace_derivatives(self, beta):
        """Return (E[X e^{-beta X}], E[X^2 e^{-beta X}])."""
        raise NotImplementedError

    def ppf(self, u):
        """Quantile function, vectorized over an array of uniforms in (0,1)."""
        raise NotImplementedError

    def boltzmann_exponent(self, u, beta, shift):
        """-beta * ppf(u) - shift in as few array passes as the law allows."""
        x = np.asarray(self.ppf(u), dtype=np.float64)
        x *= -beta
        x -= shift
        return x

    def cdf(self, x):
        raise NotImplementedError

    def spec(self):
        """Specification string that parses back to an equal law."""
        raise NotImplementedError

    def atoms(self):
        """(values, probs) tuples for finite-support laws, else None."""
        return None


@dataclass(frozen=True)
class TwoPoint(ConductanceLaw):
    a: float
    b: float
    p: float  # probability of value a

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"two-point probability must be in [0,1]: {self.p!r}")

    def laplace(self, beta):
        return self.p * math.exp(-beta * self.a) + (1.0 - self.p) * math.exp(-beta * self.b)

    def log_laplace(self, beta):
        with np.errstate(divide="ignore"):
            la = np.log(self.p) - beta * self.a
            lb = np.log1p(-self.p) - beta * self.b
        return float(np.logaddexp(la, lb))

    def laplace_derivatives(self, beta):
        wa = self.p * math.exp(-beta * self.a)
        wb = (1.0 - self.p) * math.exp(-beta * self.b)
        return (self.a * wa + self.b * wb, self.a ** 2 * wa + self.b ** 2 * wb)

    def ppf(self, u):
        lo, hi = (self.a, self.b) if self.a <= self.b else (self.b, self.a)
        plo = self.p if self.a <= self.b else 1.0 - self.p
        return np.where(u <= plo, lo, hi)

    def boltzmann_exponent(self, u, beta, shift):
        lo, hi = (self.a, self.b) if self.a <= self.b else (self.b, self.a)
        plo = self.p if self.a <= self.b else 1.0 - self.p
        return np.where(u <= plo, -beta * lo - shift, -beta * hi - shift)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.p * (x >= self.a) + (1.0 - self.p) * (x >= self.b)

    def spec(self):
        return f"twopoint:{self.a!r},{self.b!r},{self.p!r}"

    def atoms(self):
        return (self.a, self.b), (self.p, 1.0 - self.p)


@dataclass(frozen=True)
class FiniteDiscrete(ConductanceLaw):
    values: tuple
    probs: tuple
    _sorted: tuple = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        if len(values) != len(probs) or not values:
            raise ValueError("values and probs must be equal-length, non-empty")
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ValueError(f"probabilities must lie in [0,1]: {probs!r}")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities must sum to 1 within {PROB_TOL}: {probs!r}")
        order = sorted(range(len(values)), key=lambda i: values[i])
        sv = np.array([values[i] for i in order])
        cp = np.cumsum([probs[i] for i in order])
        cp[-1] = 1.0  # guard searchsorted at u -> 1
        object.__setattr__(self, "_sorted", (sv, cp))

    def laplace(self, beta):
        return float(sum(p * math.exp(-beta * v) for v, p in zip(self.values, self.probs)))

    def log_laplace(self, beta):
        with np.errstate(divide="ignore"):
            logs = np.log(self.probs) - beta * np.asarray(self.values)
        m = logs.max()
        return float(m + np.log(np.exp(logs - m).sum()))

    def laplace_derivatives(self, beta):
        d1 = sum(p * v * math.exp(-beta * v) for v, p in zip(self.values, self.probs))
        d2 = sum(p * v * v * math.exp(-beta * v) for v, p in zip(self.values, self.probs))
        return (float(d1), float(d2))

    def ppf(self, u):
        sv, cp = self._sorted
        idx = np.searchsorted(cp, u, side="left")
        return sv[np.minimum(idx, len(sv) - 1)]

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for v, p in zip(self.values, self.probs):
            out += p * (x >= v)
        return out

    def spec(self):
        pairs = ",".join(f"{v!r}:{p!r}" for v, p in zip(self.values, self.probs))
        return f"discrete:{pairs}"

    def atoms(self):
        return self.values, self.probs


@dataclass(frozen=True)
class Gaussian(ConductanceLaw):
    mean: float
    stdev: float

    def __post_init__(self):
        if self.stdev < 0.0:
            raise ValueError(f"stdev must be >= 0: {self.stdev!r}")

    def laplace(self, beta):
        return math.exp(self.log_laplace(beta))

    def log_laplace(self, beta):
        return -beta * self.mean + 0.5 * (beta * self.stdev) ** 2

    def laplace_derivatives(self, beta):
        lam = self.laplace(beta)
        m1 = self.mean - beta * self.stdev ** 2
        return (m1 * lam, (self.stdev ** 2 + m1 ** 2) * lam)

    def ppf(self, u):
        if self.stdev == 0.0:
            return np.full_like(np.asarray(u, dtype=float), self.mean)
        return self.mean + self.stdev * ndtri(u)

    def boltzmann_exponent(self, u, beta, shift):
        if self.stdev == 0.0:
            return np.full_like(np.asarray(u, dtype=float), -beta * self.mean - shift)
        q = ndtri(u)
        q *= -beta * self.stdev
        q += -beta * self.mean - shift
        return q

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.stdev == 0.0:
            return (x >= self.mean).astype(float)
        return ndtr((x - self.mean) / self.stdev)

    def spec(self):
        return f"gaussian:{self.mean!r},{self.stdev!r}"


@dataclass(frozen=True)
class Exponential(ConductanceLaw):
    rate: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError(f"rate must be > 0: {self.rate!r}")

    def exists(self, beta):
        return beta > -self.rate

    def laplace(self, beta):
        self._require(beta)
        return self.rate / (self.rate + beta)

    def log_laplace(self, beta):
        self._require(beta)
        return math.log(self.rate) - math.log(self.rate + beta)

    def laplace_derivatives(self, beta):
        self._require(beta)
        s = self.rate + beta
        return (self.rate / s ** 2, 2.0 * self.rate / s ** 3)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def boltzmann_exponent(self, u, beta, shift):
        q = np.log1p(-np.asarray(u, dtype=float))
        q *= beta / self.rate
        q -= shift
        return q

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))

    def spec(self):
        return f"exponential:{self.rate!r}"


@dataclass(frozen=True)
class Constant(ConductanceLaw):
    x0: float

    def laplace(self, beta):
        return math.exp(-beta * self.x0)

    def log_laplace(self, beta):
        return -beta * self.x0

    def laplace_derivatives(self, beta):
        w = math.exp(-beta * self.x0)
        return (self.x0 * w, self.x0 ** 2 * w)

    def ppf(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.x0)

    def boltzmann_exponent(self, u, beta, shift):
        return np.full_like(np.asarray(u, dtype=float), -beta * self.x0 - shift)

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.x0).astype(float)

    def spec(self):
        return f"constant:{self.x0!r}"

    def atoms(self):
        return (self.x0,), (1.0,)


def _floats(text, n, what):
    parts = text.split(",")
    if len(parts) != n:
        raise LawSpecError(f"{what}: expected {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise LawSpecError(f"{what}: {exc}") from None


def parse_law(text):
    """Parse a law specification string into a ConductanceLaw."""
    if not isinstance(text, str) or ":" not in text:
        raise LawSpecError(f"law spec must look like 'tag:params': {text!r}")
    tag, rest = text.split(":", 1)
    tag = tag.strip().lower()
    try:
        if tag == "twopoint":
            a, b, p = _floats(rest, 3, "twopoint")
            return TwoPoint(a, b, p)
        if tag == "discrete":
            values, probs = [], []
            for pair in rest.split(","):
                vp = pair.split(":")
                if len(vp) != 2:
                    raise LawSpecError(f"discrete: expected 'value:prob' pairs, got {pair!r}")
                values.append(float(vp[0]))
                probs.append(float(vp[1]))
            return FiniteDiscrete(tuple(values), tuple(probs))
        if tag == "gaussian":
            mean, stdev = _floats(rest, 2, "gaussian")
            return Gaussian(mean, stdev)
        if tag == "exponential":
            (rate,) = _floats(rest, 1, "exponential")
            return Exponential(rate)
        if tag == "constant":
            (x0,) = _floats(rest, 1, "constant")
            return Constant(x0)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, LawSpecError):
            raise
        raise LawSpecError(f"{tag}: {exc}") from None
    raise LawSpecError(f"unknown law tag {tag!r}")
