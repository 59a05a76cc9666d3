"""Finite-N moments of the centred per-configuration summand and its truncation.

Per configuration the summand is

    Y(x) = exp(-N b^2) * (exp(b sqrt(N) x) - exp(N b^2 / 2)),   x ~ N(0, 1),

which has mean zero and variance s2 = 1 - exp(-N b^2).  Truncation keeps Y
only while Y <= 2^(N/2) / t, i.e. while x <= c.  Every closed form below
reduces to truncated exponential moments

    E[exp(j b sqrt(N) X); l < X <= u] = exp(j^2 N b^2 / 2) P(l - j b sqrt(N) < X <= u - j b sqrt(N)),

assembled in log domain with explicit signs.  Each quantity also has a
quadrature route so the two can be played against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from remlab.errors import DomainError, NumericalFailure
from remlab.gauss import gauss_pdf_log, log_gauss_tail, log_interval_prob
from remlab.quadrature import integrate
from remlab.theory import LOG2, ModelParams

MAX_LOST_BITS = 40.0
LAMBDA_CAP = 64.0
QUAD_RTOL = 1e-12


@dataclass(frozen=True)
class TruncationSpec:
    """Truncation of Y at 2^(N/2)/t and the equivalent x-threshold ``c``.

    ``t = 0`` encodes no truncation (``c`` and ``threshold_log`` infinite).
    """

    params: ModelParams
    t: float
    threshold_log: float
    c: float
    c_asymptotic: float

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def b(self) -> float:
        """beta * sqrt(N): the slope of the exponent in x."""
        return self.params.beta * math.sqrt(self.params.n)

    @property
    def nb2(self) -> float:
        return self.params.n * self.params.beta ** 2

    @property
    def x0(self) -> float:
        """Sign change of Y."""
        return 0.5 * self.b

    @property
    def truncated(self) -> bool:
        return math.isfinite(self.c)


def truncation_spec(params: ModelParams, t: float) -> TruncationSpec:
    if not params.beta > 0:
        raise DomainError("truncation needs beta > 0")
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"t must be finite and > 0, got {t!r}")
    n, beta = params.n, params.beta
    nb2 = n * beta * beta
    b = beta * math.sqrt(n)
    threshold_log = 0.5 * n * LOG2 - math.log(t)
    c = float(np.logaddexp(nb2 + threshold_log, 0.5 * nb2)) / b
    c_asym = math.sqrt(n) * (beta + LOG2 / (2.0 * beta)) - math.log(t) / b
    return TruncationSpec(params, t, threshold_log, c, c_asym)


def untruncated_spec(params: ModelParams) -> TruncationSpec:
    if not params.beta > 0:
        raise DomainError("moments need beta > 0")
    return TruncationSpec(params, 0.0, math.inf, math.inf, math.inf)


# ---------------------------------------------------------------- log-domain sums


def _signed_sum(terms):
    """Sum of sign * exp(logabs) terms; returns (value, bits lost to cancellation)."""
    terms = [(s, l) for s, l in terms if l != -math.inf]
    if not terms:
        return 0.0, 0.0
    top = max(l for _, l in terms)
    parts = [s * math.exp(l - top) for s, l in terms]
    total = math.fsum(parts)
    size = math.fsum(abs(p) for p in parts)
    lost = math.inf if total == 0.0 else math.log2(size / abs(total))
    return total * math.exp(top), lost


def _piece_terms(k, lo, hi, spec):
    """Signed log terms of E[Y^k; lo < X <= hi]."""
    b, nb2 = spec.b, spec.nb2
    out = []
    for j in range(k + 1):
        lp = log_interval_prob(lo - j * b, hi - j * b)
        if lp == -math.inf:
            continue
        log_coef = math.log(math.comb(k, j)) + 0.5 * nb2 * (j * j - j - k)
        out.append((-1.0 if (k - j) % 2 else 1.0, log_coef + lp))
    return out


def _full_moment(k, spec):
    """Untruncated E[Y^k]."""
    if k == 1:
        return 0.0, 0.0
    if k == 2:
        return -math.expm1(-spec.nb2), 0.0
    return _signed_sum(_piece_terms(k, -math.inf, math.inf, spec))


def _lower_moment(k, spec, x):
    """E[Y^k; X <= x] by the cheaper of: direct, or untruncated minus upper tail."""
    direct = _signed_sum(_piece_terms(k, -math.inf, x, spec))
    if x == math.inf:
        return _full_moment(k, spec)
    full, full_lost = _full_moment(k, spec)
    tail, tail_lost = _signed_sum(_piece_terms(k, x, math.inf, spec))
    value = full - tail
    scale = max(abs(full), abs(tail))
    lost = max(full_lost, tail_lost,
               math.inf if value == 0.0 and scale > 0 else (math.log2(scale / abs(value)) if scale else 0.0))
    return min(direct, (value, lost), key=lambda r: r[1])


def _interval_moment(k, spec, lo, hi):
    """E[Y^k; lo < X <= hi] with lo finite."""
    direct = _signed_sum(_piece_terms(k, lo, hi, spec))
    if hi == math.inf:
        return direct
    upper, l1 = _signed_sum(_piece_terms(k, lo, math.inf, spec))
    tail, l2 = _signed_sum(_piece_terms(k, hi, math.inf, spec))
    value = upper - tail
    scale = max(abs(upper), abs(tail))
    lost = max(l1, l2, math.inf if value == 0.0 else math.log2(scale / abs(value)))
    return min(direct, (value, lost), key=lambda r: r[1])


def truncated_raw_moment(spec: TruncationSpec, k: int) -> float:
    """Closed-form E[(Y^t)^k] for integer k >= 1."""
    if k < 1:
        raise DomainError("moment order must be >= 1")
    value, lost = _lower_moment(k, spec, spec.c)
    if lost > MAX_LOST_BITS:
        raise NumericalFailure(f"closed-form moment of order {k} lost {lost:.1f} bits")
    return value


# ---------------------------------------------------------------- quadrature route


def _log_abs_expm1(a):
    """log|exp(a) - 1|, finite for every finite a != 0."""
    a = np.asarray(a, dtype=float)
    pos = a > 0
    ap = np.where(pos, a, 0.0)
    an = np.where(pos, 0.0, a)
    with np.errstate(divide="ignore"):
        return np.where(pos, ap + np.log(-np.expm1(-ap)), np.log(-np.expm1(an)))


def _log_abs_y(x, spec):
    return _log_abs_expm1(spec.b * x - 0.5 * spec.nb2) - 0.5 * spec.nb2


def _y(x, spec):
    return np.exp(-0.5 * spec.nb2) * np.expm1(spec.b * x - 0.5 * spec.nb2)


def _breaks(spec):
    pts = [spec.x0]
    if spec.truncated:
        pts.append(spec.c)
    return pts


def _quad_abs(spec, k, lo, hi, rel_tol):
    def f(x):
        return np.exp(gauss_pdf_log(x) + k * _log_abs_y(x, spec))

    pts = [p for p in _breaks(spec) if lo < p < hi]
    return integrate(f, lo, hi, rel_tol=rel_tol, breakpoints=pts).value


def quad_moment(spec: TruncationSpec, k: int, absolute: bool = False, rel_tol: float = QUAD_RTOL,
                direct: bool = False) -> float:
    """E[(Y^t)^k] (or E|Y^t|^k) by adaptive quadrature, split at x0 and c.

    Odd signed moments change sign at x0 and their two halves nearly cancel.
    For k = 1 on a truncated spec the default therefore integrates the
    positive upper tail, using E[Y] = 0: E[Y^t] = -E[Y; X > c].
    ``direct=True`` forces the two-piece signed sum instead (absolute
    accuracy only).
    """
    if absolute or k % 2 == 0:
        return _quad_abs(spec, k, -math.inf, spec.c, rel_tol)
    if k == 1 and spec.truncated and not direct:
        return -_quad_abs(spec, 1, spec.c, math.inf, rel_tol)
    below = _quad_abs(spec, k, -math.inf, spec.x0, rel_tol)
    above = _quad_abs(spec, k, spec.x0, spec.c, rel_tol)
    return above - below


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class MomentReport:
    m1: float
    m2: float
    m3abs: float
    m1_scaled: float
    m3_scaled: float
    s2: float
    method: str
    fallback: bool = False
    lost_bits: float = 0.0


def _report(spec, m1, m2, m3abs, method, fallback=False, lost=0.0):
    half = 0.5 * spec.n * LOG2
    if spec.truncated:
        m1_scaled = m1 * math.exp(half - math.log(spec.t))
        m3_scaled = m3abs * math.exp(math.log(spec.t) - half)
    else:
        m1_scaled = m3_scaled = math.nan
    return MomentReport(m1, m2, m3abs, m1_scaled, m3_scaled, -math.expm1(-spec.nb2),
                        method, fallback, lost)


def truncated_moments(spec: TruncationSpec, method: str = "closed-form") -> MomentReport:
    """First, second and absolute third moment of the truncated summand.

    The closed form falls back to quadrature (``fallback=True``) when the
    log-domain assembly loses more than 40 bits to cancellation.
    """
    if method == "quadrature":
        return _report(spec, quad_moment(spec, 1), quad_moment(spec, 2),
                       quad_moment(spec, 3, absolute=True), "quadrature")
    if method != "closed-form":
        raise DomainError(f"unknown method {method!r}")
    m1, l1 = _lower_moment(1, spec, spec.c)
    m2, l2 = _lower_moment(2, spec, spec.c)
    below, l3 = _lower_moment(3, spec, spec.x0)
    above, l4 = _interval_moment(3, spec, spec.x0, spec.c)
    lost = max(l1, l2, l3, l4)
    if lost > MAX_LOST_BITS:
        q = truncated_moments(spec, "quadrature")
        return MomentReport(q.m1, q.m2, q.m3abs, q.m1_scaled, q.m3_scaled, q.s2,
                            "quadrature", True, lost)
    return _report(spec, m1, m2, above - below, "closed-form", lost=lost)


def t_second_moment(params: ModelParams) -> float:
    """E T^2 = (exp(N beta^2) - 1) / 2^N, the variance of Z/EZ - 1."""
    nb2 = params.n * params.beta ** 2
    if nb2 < 700.0:
        return math.ldexp(math.expm1(nb2), -params.n)
    return math.exp(nb2 + math.log1p(-math.exp(-nb2)) - params.n * LOG2)


# ---------------------------------------------------------------- SCGF


def _expm1_minus_linear(z):
    """exp(z) - 1 - z without cancellation near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.1
    zs = np.where(small, z, 0.0)
    p = np.zeros_like(zs)
    for k in range(12, 1, -1):
        p = (p + 1.0 / math.factorial(k)) * zs if k > 2 else (p + 0.5) * zs * zs
    big = np.expm1(np.where(small, 0.0, z)) - np.where(small, 0.0, z)
    return np.where(small, p, big)


def _check_lambda(lam):
    lam = float(lam)
    if not abs(lam) <= LAMBDA_CAP:
        raise DomainError(f"|lambda| must be <= {LAMBDA_CAP}, got {lam!r}")
    return lam


def _require_truncated(spec):
    if not spec.truncated:
        raise DomainError("the untruncated summand has no finite exponential moments")


def scgf_increment(spec: TruncationSpec, lam: float, rel_tol: float = 1e-11) -> float:
    """t^-2 2^N (E exp(eps Y^t) - 1) with eps = lam t 2^(-N/2).

    Splits E[exp(eps Y) - 1] = eps E[Y^t] + E[exp(eps Y) - 1 - eps Y]; the
    second integrand is nonnegative, so quadrature meets a relative
    tolerance on it even when eps ~ 2^(-N/2).
    """
    _require_truncated(spec)
    lam = _check_lambda(lam)
    if lam == 0.0:
        return 0.0
    n, t = spec.n, spec.t
    log_eps = math.log(abs(lam)) + math.log(t) - 0.5 * n * LOG2
    eps = math.copysign(math.exp(log_eps), lam)
    scale = math.exp(n * LOG2 - 2.0 * math.log(t))
    m1 = truncated_moments(spec).m1
    linear = lam * m1 * math.exp(0.5 * n * LOG2 - math.log(t))

    def f(x):
        return np.exp(gauss_pdf_log(x)) * _expm1_minus_linear(eps * _y(x, spec)) * scale

    rest = integrate(f, -math.inf, spec.c, rel_tol=rel_tol, breakpoints=_breaks(spec)).value
    return linear + rest


def finite_scgf(spec: TruncationSpec, lam: float) -> float:
    """t^-2 log E exp(lam t^-1 2^(-N/2) sum_sigma Y^t), exact at finite N."""
    inc = scgf_increment(spec, lam)
    if inc == 0.0:
        return 0.0
    ratio = math.exp(2.0 * math.log(spec.t) - spec.n * LOG2)
    x = inc * ratio
    if not x > -1.0:
        raise NumericalFailure(f"MGF of a bounded variable came out non-positive ({x!r})")
    return math.log1p(x) / ratio


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def chernoff_bound(spec: TruncationSpec, x: float, tol: float = 1e-8) -> float:
    """inf over lam of finite_scgf(lam) - lam x, lam restricted to the sign of x.

    Upper-bounds t^-2 log P(+-t^-1 2^(-N/2) sum Y^t >= +-x).
    """
    _require_truncated(spec)
    lo, hi = (0.0, LAMBDA_CAP) if x >= 0 else (-LAMBDA_CAP, 0.0)

    def h(lam):
        v = finite_scgf(spec, lam) - lam * x
        if not math.isfinite(v):
            raise NumericalFailure(f"Chernoff objective not finite at lambda = {lam!r}")
        return v

    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = h(c), h(d)
    for _ in range(200):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = h(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = h(d)
    else:
        raise NumericalFailure("golden-section search did not converge")
    best = min(fc, fd, 0.0, h(lo if x >= 0 else hi))
    return best


# ---------------------------------------------------------------- truncation events


class TruncationRate(NamedTuple):
    exact: float
    predicted: float


def truncation_event_rate(spec: TruncationSpec) -> TruncationRate:
    """Union-bound exponent t^-2 log(2^N P(X > c)) and its large-N prediction."""
    _require_truncated(spec)
    n, beta, t2 = spec.n, spec.beta, spec.t ** 2
    exact = (n * LOG2 + log_gauss_tail(spec.c)) / t2
    predicted = -n / (2.0 * t2) * (beta - LOG2 / (2.0 * beta)) ** 2 - math.log(n) / (2.0 * t2)
    return TruncationRate(exact, predicted)


def truncation_hit_probability(spec: TruncationSpec) -> float:
    """P(some configuration exceeds the cap) = 1 - (1 - P(X > c))^(2^N)."""
    _require_truncated(spec)
    p = math.exp(log_gauss_tail(spec.c))
    return -math.expm1(math.ldexp(math.log1p(-p), spec.n))
