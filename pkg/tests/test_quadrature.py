import math

import mpmath as mp
import numpy as np
import pytest

from remlab.errors import DomainError, QuadratureError
from remlab.gauss import gauss_pdf_log, log_gauss_cdf
from remlab.quadrature import MIN_REL_TOL, QuadratureResult, integrate


def phi(x):
    return np.exp(gauss_pdf_log(x))


def test_normalization():
    r = integrate(phi, -math.inf, math.inf, rel_tol=1e-13)
    assert isinstance(r, QuadratureResult)
    assert r.value == pytest.approx(1.0, abs=1e-12)
    assert r.abs_error_estimate >= 0 and r.evaluations >= 1


def test_unit_variance():
    r = integrate(lambda x: x * x * phi(x), -math.inf, math.inf, rel_tol=1e-13)
    assert r.value == pytest.approx(1.0, abs=1e-12)


def test_truncated_exponential_moment():
    n, beta, c = 10, 0.3, 2.0
    b = beta * math.sqrt(n)
    r = integrate(lambda x: np.exp(b * x) * phi(x), -math.inf, c, rel_tol=1e-13)
    closed = math.exp(n * beta ** 2 / 2 + log_gauss_cdf(c - b))
    assert r.value == pytest.approx(closed, rel=1e-10)


def test_breakpoints_respected():
    r = integrate(lambda x: np.abs(x - 0.3), 0.0, 1.0, rel_tol=2 * MIN_REL_TOL, breakpoints=[0.3])
    assert r.value == pytest.approx(0.3 ** 2 / 2 + 0.7 ** 2 / 2, rel=1e-14)


def test_left_semi_infinite_against_mpmath():
    f = lambda x: np.exp(-x * x) * np.cos(x)  # noqa: E731
    ref = mp.quad(lambda x: mp.exp(-x * x) * mp.cos(x), [-mp.inf, 0.5])
    assert integrate(f, -math.inf, 0.5, rel_tol=1e-12).value == pytest.approx(float(ref), rel=1e-11)


def test_deterministic():
    f = lambda x: np.exp(-np.abs(x)) * np.sin(3 * x) ** 2  # noqa: E731
    a = integrate(f, -math.inf, math.inf, rel_tol=1e-11, breakpoints=[0.0])
    b = integrate(f, -math.inf, math.inf, rel_tol=1e-11, breakpoints=[0.0])
    assert a == b


def test_budget_exhaustion_carries_estimate():
    with pytest.raises(QuadratureError) as info:
        integrate(lambda x: np.sin(1.0 / np.maximum(x, 1e-300)), 1e-6, 1.0, rel_tol=1e-12, max_evals=300)
    assert info.value.evaluations >= 300
    assert math.isfinite(info.value.estimate)


def test_non_finite_integrand():
    with pytest.raises(QuadratureError):
        integrate(lambda x: 1.0 / (x - x), 0.0, 1.0)


def test_bad_limits():
    with pytest.raises(DomainError):
        integrate(phi, 1.0, 0.0)
    with pytest.raises(DomainError):
        integrate(phi, 0.0, 1.0, rel_tol=0.0)


def test_tolerance_below_roundoff_floor_rejected():
    # the per-panel error estimate cannot fall below 50 eps of the |f| integral
    assert MIN_REL_TOL == 50 * np.finfo(float).eps
    with pytest.raises(DomainError):
        integrate(phi, 0.0, 1.0, rel_tol=1e-14)
    assert integrate(phi, 0.0, 1.0, rel_tol=MIN_REL_TOL).value == pytest.approx(0.3413447460685429, rel=1e-14)
