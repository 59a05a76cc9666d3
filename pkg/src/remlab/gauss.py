"""Gaussian tail, tail bounds and quantile, all accurate far into the tails.

Tails are returned as logarithms.  The quantile uses Wichura's AS 241
(PPND16) rational approximation, compiled with numba so the simulator can
call the very same code per variate.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from remlab.errors import DomainError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT1_2 = 1.0 / math.sqrt(2.0)
# Above this the continued fraction converges in a few dozen terms.
_CF_SWITCH = 5.0


def _mills_ratio_cf(x: float) -> float:
    """Mills ratio tail/density for x >= _CF_SWITCH by modified Lentz."""
    tiny = 1e-300
    f = x
    c = x
    d = 0.0
    for k in range(1, 500):
        d = x + k * d
        d = tiny if d == 0.0 else d
        c = x + k / c
        c = tiny if c == 0.0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return 1.0 / f


def log_gauss_tail(x: float) -> float:
    """log P(N(0,1) > x)."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"log_gauss_tail needs a finite argument, got {x!r}")
    if x >= _CF_SWITCH:
        return -0.5 * x * x - LOG_SQRT_2PI + math.log(_mills_ratio_cf(x))
    if x >= 0.0:
        return math.log(0.5 * math.erfc(x * _SQRT1_2))
    if x > -_CF_SWITCH:
        return math.log1p(-0.5 * math.erfc(-x * _SQRT1_2))
    return math.log1p(-_upper_tail_prob(-x))


def _exact_square(x: float) -> tuple:
    """x*x as an unevaluated sum hi + lo (Dekker)."""
    c = 134217729.0 * x
    xh = c - (c - x)
    xl = x - xh
    hi = x * x
    lo = ((xh * xh - hi) + 2.0 * xh * xl) + xl * xl
    return hi, lo


def _upper_tail_prob(x: float) -> float:
    """P(N(0,1) > x) for x >= _CF_SWITCH, without losing the rounding of x*x."""
    hi, lo = _exact_square(x)
    return math.exp(-0.5 * hi) * (1.0 - 0.5 * lo) * _mills_ratio_cf(x) / math.sqrt(2.0 * math.pi)


def log_gauss_cdf(x: float) -> float:
    """log P(N(0,1) <= x)."""
    return log_gauss_tail(-x)


def gauss_tail_sandwich(x: float) -> tuple:
    """Log of the lower and upper Mills-ratio bounds on P(N(0,1) > x), x > 0."""
    x = float(x)
    if not (x > 0.0 and math.isfinite(x)):
        raise DomainError(f"tail sandwich needs x > 0, got {x!r}")
    core = -0.5 * x * x - LOG_SQRT_2PI
    lower = math.log(x) - math.log1p(x * x) + core
    upper = -math.log(x) + core
    return lower, upper


def log_interval_prob(lo: float, hi: float) -> float:
    """log P(lo < N(0,1) <= hi) for lo < hi, either end may be infinite."""
    if not lo < hi:
        return -math.inf
    if lo == -math.inf:
        return 0.0 if hi == math.inf else log_gauss_cdf(hi)
    if hi == math.inf:
        return log_gauss_tail(lo)
    if lo >= 0.0:
        a, b = log_gauss_tail(lo), log_gauss_tail(hi)
        return a + math.log(-math.expm1(b - a))
    if hi <= 0.0:
        a, b = log_gauss_cdf(hi), log_gauss_cdf(lo)
        return a + math.log(-math.expm1(b - a))
    return math.log1p(-(math.exp(log_gauss_tail(hi)) + math.exp(log_gauss_cdf(lo))))


def gauss_pdf_log(x):
    return -0.5 * np.square(x) - LOG_SQRT_2PI


# AS 241, PPND16.  Coefficients are listed from the constant term upward.
_A = (3.387132872796366608, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187, 1.67638483018380384940, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _horner(c):
    c0, c1, c2, c3, c4, c5, c6, c7 = c

    @njit(inline="always", cache=True)
    def poly(r):
        return ((((((c7 * r + c6) * r + c5) * r + c4) * r + c3) * r + c2) * r + c1) * r + c0

    return poly


_pa, _pb, _pc, _pd, _pe, _pf = (_horner(c) for c in (_A, _B, _C, _D, _E, _F))


@njit(inline="always", cache=True)
def quantile_lower(u):
    """Standard normal quantile for 0 < u <= 1/2."""
    q = u - 0.5
    if q >= -0.425:
        r = 0.180625 - q * q
        return q * _pa(r) / _pb(r)
    r = math.sqrt(-math.log(u))
    if r <= 5.0:
        r -= 1.6
        return -_pc(r) / _pd(r)
    r -= 5.0
    return -_pe(r) / _pf(r)


@njit(cache=True)
def _quantile(u):
    if u <= 0.5:
        return quantile_lower(u)
    return -quantile_lower(1.0 - u)


def gauss_quantile(u: float) -> float:
    """x with P(N(0,1) <= x) = u, for 0 < u < 1."""
    u = float(u)
    if not 0.0 < u < 1.0:
        raise DomainError(f"quantile needs 0 < u < 1, got {u!r}")
    return float(_quantile(u))


@njit(cache=True)
def _quantile_array(u, out):
    for i in range(u.size):
        out[i] = _quantile(u[i])


def gauss_quantile_array(u) -> np.ndarray:
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.size and not (np.all(u > 0.0) and np.all(u < 1.0)):
        raise DomainError("quantile needs 0 < u < 1 elementwise")
    out = np.empty_like(u)
    _quantile_array(u.ravel(), out.ravel())
    return out


# The generic integrator lives in its own module; re-exported for convenience.
from remlab.quadrature import QuadratureResult, integrate  # noqa: E402,F401
