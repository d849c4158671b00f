"""
Chi-squared distribution, the MD tail bound and moments of random Gaussian sums.

The incomplete gamma function is evaluated with the series representation for
x < a + 1 and the Lentz continued fraction otherwise (Numerical Recipes,
chapter 6).
"""

import math
import sys
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats as sps
from scipy.special import factorial2, gammaln

from .exceptions import DomainError, MomentOverflowError, PreconditionError

TOLERANCE = 1.0e-12
MAX_ITERATIONS = 10_000
MAX_MOMENT_ORDER = 12

_TINY = sys.float_info.min / sys.float_info.epsilon


def _gamma_series(a, x):
    """P(a, x) by its power series; valid for x < a + 1."""
    if x == 0.0:
        return 0.0
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(MAX_ITERATIONS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * TOLERANCE:
            return total * math.exp(-x + a * math.log(x) - gammaln(a))
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_continued_fraction(a, x):
    """Q(a, x) by the modified Lentz continued fraction; valid for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITERATIONS + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < TOLERANCE:
            return math.exp(-x + a * math.log(x) - gammaln(a)) * h
    raise ArithmeticError(f"incomplete gamma fraction did not converge (a={a}, x={x})")


def _check_chi2_args(dof, x):
    if dof < 1 or int(dof) != dof:
        raise DomainError(f"degrees of freedom must be a positive integer, got {dof!r}")
    if x < 0:
        raise DomainError(f"chi-squared argument must be non-negative, got {x!r}")


def chi2_cdf(dof, x):
    """Pr(chi2_dof <= x) through the regularized lower incomplete gamma P(dof/2, x/2)."""
    _check_chi2_args(dof, x)
    a, half = 0.5 * dof, 0.5 * x
    if half < a + 1.0:
        return _gamma_series(a, half)
    return 1.0 - _gamma_continued_fraction(a, half)


def chi2_sf(dof, x):
    """Pr(chi2_dof > x), evaluated directly so small tails keep their precision."""
    _check_chi2_args(dof, x)
    a, half = 0.5 * dof, 0.5 * x
    if half < a + 1.0:
        return 1.0 - _gamma_series(a, half)
    return _gamma_continued_fraction(a, half)


def md_tail_bound(T, r):
    """Upper bound exp(-(T/2)(1 - r)) on Pr(chi2_2T / 2T < r) for 0 < r < 1."""
    if not 0.0 < r < 1.0:
        raise PreconditionError(f"threshold ratio must lie in (0, 1), got {r!r}")
    return math.exp(-0.5 * T * (1.0 - r))


@dataclass(frozen=True)
class MomentReport:
    k: int
    EY_k: float
    EZ_k: float
    EB_l: float
    excess_kurtosis: float


def _binomial_moment(M, rho, order):
    counts = np.arange(M + 1, dtype=float)
    weights = sps.binom.pmf(counts, M, rho)
    return math.fsum(weights * counts ** order)


def random_sum_moments(M, rho, sigma2, k_max):
    """Moments of Y = sum_{k<=B} X_k (B ~ Bin(M, rho), X ~ N(0, sigma2)) and of
    its Gaussian counterpart Z ~ N(0, M rho sigma2), orders 1..k_max.

    Real-valued convention: X_k is a real Gaussian.
    """
    if k_max < 1 or k_max > MAX_MOMENT_ORDER:
        raise PreconditionError(f"k_max must lie in 1..{MAX_MOMENT_ORDER}, got {k_max}")

    reports = []
    even_moments = {}
    for k in range(1, k_max + 1):
        if k % 2:
            reports.append((k, 0.0, 0.0, math.nan))
            continue
        l = k // 2
        try:
            eb = _binomial_moment(M, rho, l)
            scale = sigma2 ** l * factorial2(k - 1, exact=True)
            ey = eb * scale
            ez = (M * rho) ** l * scale
        except OverflowError as exc:
            raise MomentOverflowError(f"moment of order {k} overflows") from exc
        if not (math.isfinite(ey) and math.isfinite(ez)):
            raise MomentOverflowError(f"moment of order {k} overflows")
        even_moments[k] = ey
        reports.append((k, ey, ez, eb))

    if 4 in even_moments and even_moments[2] > 0:
        kurtosis = even_moments[4] / even_moments[2] ** 2 - 3.0
    else:
        kurtosis = math.nan
    return [MomentReport(k, ey, ez, eb, kurtosis) for k, ey, ez, eb in reports]


def random_sum_sample(M, rho, sigma2, n_samples, rng):
    """Draw samples of Y; given B the sum is exactly N(0, B sigma2)."""
    if n_samples < 1:
        raise PreconditionError("n_samples must be at least 1")
    counts = rng.binomial(M, rho, size=n_samples)
    return np.sqrt(counts * sigma2) * rng.standard_normal(n_samples)


def mgf_domination(M, rho, sigma2, s_grid):
    """Exact MGF of Y and the Gaussian bound exp(M sigma2 s^2 / 2) on a grid."""
    s = np.asarray(s_grid, dtype=float)
    exact = (1.0 + rho * np.expm1(0.5 * sigma2 * s ** 2)) ** M
    bound = np.exp(0.5 * M * sigma2 * s ** 2)
    return exact, bound


def random_sum_histogram(samples, M, rho, sigma2, bins=81):
    """Histogram of Y next to the N(0, M rho sigma2) density scaled to counts."""
    counts, edges = np.histogram(samples, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    variance = M * rho * sigma2
    if variance > 0:
        expected = sps.norm.pdf(centers, scale=math.sqrt(variance)) * len(samples) * width
    else:
        # point mass at zero
        expected = np.zeros_like(centers)
        expected[np.argmin(np.abs(centers))] = len(samples)
    return pd.DataFrame({
        'bin_center': centers,
        'count': counts,
        'gaussian_pdf': expected,
    })
