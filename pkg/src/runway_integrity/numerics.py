"""Chi-squared and normal distribution helpers.

The chi-squared CDF is the regularized lower incomplete gamma function
``P(dof/2, x/2)``, evaluated with the usual split: power series below
``a + 1``, Lentz continued fraction for the upper tail above it. No
external special-function library is involved so the integrity test has
a self-contained numerical path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_TERMS = 10_000


@dataclass(frozen=True)
class ChiSquared:
    """Chi-squared distribution with ``dof`` degrees of freedom."""

    dof: int

    def __post_init__(self):
        if int(self.dof) != self.dof or self.dof < 1:
            raise DomainError(f"dof must be a positive integer, got {self.dof!r}")


DistLike = Union[ChiSquared, int]


def _as_dist(d: DistLike) -> ChiSquared:
    return d if isinstance(d, ChiSquared) else ChiSquared(int(d))


def _log_prefactor(a: float, x: float) -> float:
    # log(x^a e^-x / Gamma(a))
    return a * math.log(x) - x - math.lgamma(a)


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by its power series; use for x < a + 1."""
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _gamma_contfrac(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by modified Lentz; use for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(_log_prefactor(a, x)) * h


def regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise DomainError("shape parameter must be positive")
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_gamma_series(a, x), 1.0)
    return max(1.0 - _gamma_contfrac(a, x), 0.0)


def regularized_gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise DomainError("shape parameter must be positive")
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(1.0 - _gamma_series(a, x), 0.0)
    return min(_gamma_contfrac(a, x), 1.0)


def _check_x(x: float) -> float:
    x = float(x)
    if not x >= 0:  # also rejects nan
        raise DomainError(f"chi-squared argument must be >= 0, got {x!r}")
    return x


def chi2_pdf(d: DistLike, x: float) -> float:
    """Density of the chi-squared distribution at ``x``.

    For one degree of freedom the density diverges at the origin and
    ``inf`` is returned there.
    """
    k = _as_dist(d).dof
    x = _check_x(x)
    half = 0.5 * k
    if x == 0.0:
        if k == 1:
            return math.inf
        return 0.5 if k == 2 else 0.0
    if math.isinf(x):
        return 0.0
    return math.exp((half - 1.0) * math.log(x) - 0.5 * x - half * math.log(2.0) - math.lgamma(half))


def chi2_cdf(d: DistLike, x: float) -> float:
    """Lower-tail probability ``Pr(X <= x)``."""
    k = _as_dist(d).dof
    return regularized_gamma_p(0.5 * k, 0.5 * _check_x(x))


def chi2_sf(d: DistLike, x: float) -> float:
    """Upper-tail probability ``Pr(X > x) = 1 - chi2_cdf``, accurate far into the tail."""
    k = _as_dist(d).dof
    return regularized_gamma_q(0.5 * k, 0.5 * _check_x(x))


def chi2_quantile(d: DistLike, rho: float) -> float:
    """Inverse of :func:`chi2_cdf`: the ``x`` with ``chi2_cdf(d, x) == rho``.

    Brackets the root, bisects to a coarse width and then polishes with
    safeguarded Newton steps. Above the median the upper-tail equation
    ``chi2_sf(d, x) == 1 - rho`` is solved instead; ``1 - rho`` is exact
    in binary floating point there.
    """
    dist = _as_dist(d)
    rho = float(rho)
    if not 0.0 < rho < 1.0:
        raise DomainError(f"probability level must lie in (0, 1), got {rho!r}")

    upper = rho > 0.5
    target = 1.0 - rho if upper else rho

    def f(x: float) -> float:
        # increasing in x in both branches
        return target - chi2_sf(dist, x) if upper else chi2_cdf(dist, x) - target

    lo, hi = 0.0, max(float(dist.dof), 1.0)
    while f(hi) < 0.0:
        lo, hi = hi, 2.0 * hi

    for _ in range(200):
        if hi - lo <= 1e-3 * (1.0 + lo):
            break
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid

    x = 0.5 * (lo + hi)
    for _ in range(100):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        dens = chi2_pdf(dist, x)
        step = fx / dens if dens > 0.0 and math.isfinite(dens) else math.inf
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4 * _EPS * max(x, 1e-300):
            return x_new
        x = x_new
    return x


def std_normal_cdf(z):
    """Standard normal CDF ``0.5 * erfc(-z / sqrt(2))``; accepts scalars or arrays."""
    if np.ndim(z) == 0:
        return 0.5 * math.erfc(-float(z) / math.sqrt(2.0))
    return 0.5 * _erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


_erfc = np.vectorize(math.erfc, otypes=[float])
