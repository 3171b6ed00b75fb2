"""Scalar functions of the triggering threshold delta.

A remote sensor transmits a measurement only when the whitened innovation
exceeds delta in infinity norm.  Everything the planner and filter need to
know about delta reduces to four scalar functions:

* ``gaussian_tail`` -- upper tail mass Q(delta) of the standard normal,
* ``beta`` -- gain attenuation applied to the covariance update when the
  sensor stays silent (the variance of a standard normal truncated to
  [-delta, delta] is exactly 1 - beta(delta)),
* ``gamma_rate`` -- expected per-step transmit probability
  1 - [1 - 2 Q(delta)]^m for an m-dimensional measurement,
* quantile helpers used to size probability-mass containment spheres.

All of it is built on the complementary error function, not table lookups:
the covariance bound recursion is sensitive to beta at the 1e-12 level.
"""

from dataclasses import dataclass
from math import erfc, exp, lgamma, log, pi, sqrt

__all__ = [
    "DELTA_MAX_DEFAULT",
    "Threshold",
    "gaussian_tail",
    "beta",
    "gamma_rate",
    "std_normal_quantile",
    "chi2_quantile",
]

DELTA_MAX_DEFAULT = 5.0

_SQRT2 = sqrt(2.0)
_INV_SQRT_2PI = 1.0 / sqrt(2.0 * pi)


@dataclass(frozen=True)
class Threshold:
    """A validated triggering threshold, in whitened standard deviations."""

    delta: float
    delta_max: float = DELTA_MAX_DEFAULT

    def __post_init__(self):
        if not (self.delta > 0.0):
            raise ValueError(f"threshold must be positive, got {self.delta}")
        if self.delta > self.delta_max:
            raise ValueError(
                f"threshold {self.delta} exceeds configured maximum {self.delta_max}"
            )


def gaussian_tail(delta: float) -> float:
    """Upper tail mass of the standard normal: integral of the pdf over (delta, inf)."""
    return 0.5 * erfc(delta / _SQRT2)


def beta(delta: float) -> float:
    """Gain attenuation factor for a silent (non-triggering) update.

    beta(delta) = (2/sqrt(2 pi)) * delta * exp(-delta^2/2) / (1 - 2 Q(delta)),
    continuously extended with beta(0) = 1 so that a zero threshold
    degenerates to the exact Kalman update.
    """
    if delta == 0.0:
        return 1.0
    numerator = 2.0 * _INV_SQRT_2PI * delta * exp(-0.5 * delta * delta)
    return numerator / (1.0 - 2.0 * gaussian_tail(delta))


def gamma_rate(delta: float, m: int) -> float:
    """Expected per-step trigger probability for an m-dimensional measurement."""
    return 1.0 - (1.0 - 2.0 * gaussian_tail(delta)) ** m


def _std_normal_cdf(x: float) -> float:
    return 0.5 * erfc(-x / _SQRT2)


def _std_normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * exp(-0.5 * x * x)


# Coefficients of Acklam's rational approximation to the normal quantile.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF via rational approximation plus one Newton step."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile argument must lie in (0,1), got {p}")
    p_low = 0.02425
    if p < p_low:
        q = sqrt(-2.0 * log(p))
        x = ((((( _C[0]*q + _C[1])*q + _C[2])*q + _C[3])*q + _C[4])*q + _C[5]) / \
            (((( _D[0]*q + _D[1])*q + _D[2])*q + _D[3])*q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((( _A[0]*r + _A[1])*r + _A[2])*r + _A[3])*r + _A[4])*r + _A[5])*q / \
            ((((( _B[0]*r + _B[1])*r + _B[2])*r + _B[3])*r + _B[4])*r + 1.0)
    else:
        q = sqrt(-2.0 * log(1.0 - p))
        x = -((((( _C[0]*q + _C[1])*q + _C[2])*q + _C[3])*q + _C[4])*q + _C[5]) / \
            (((( _D[0]*q + _D[1])*q + _D[2])*q + _D[3])*q + 1.0)
    # one Newton refinement against the erfc-based CDF
    err = _std_normal_cdf(x) - p
    x -= err / _std_normal_pdf(x)
    return x


def _regularized_gamma_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x), series / continued fraction."""
    if x < 0.0 or a <= 0.0:
        raise ValueError("invalid incomplete-gamma arguments")
    if x == 0.0:
        return 0.0
    log_prefactor = -x + a * log(x) - lgamma(a)
    if x < a + 1.0:
        # power series for P(a, x)
        term = 1.0 / a
        total = term
        denom = a
        for _ in range(500):
            denom += 1.0
            term *= x / denom
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return total * exp(log_prefactor)
    # modified Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        factor = d * c
        h *= factor
        if abs(factor - 1.0) < 1e-16:
            break
    return 1.0 - exp(log_prefactor) * h


def chi2_quantile(p: float, n: int) -> float:
    """Inverse CDF of the chi-square distribution with n degrees of freedom.

    Bisection on the regularized incomplete gamma; relative error <= 1e-8.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile argument must lie in (0,1), got {p}")
    if n < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {n}")
    half_n = 0.5 * n

    def cdf(x: float) -> float:
        return _regularized_gamma_lower(half_n, 0.5 * x)

    lo, hi = 0.0, 2.0 * n + 10.0
    while cdf(hi) < p:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("chi2_quantile bracket search failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, lo):
            break
    return 0.5 * (lo + hi)
