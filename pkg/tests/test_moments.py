import math

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st

from remlab import moments as M
from remlab.errors import DomainError
from remlab.moments import (
    chernoff_bound, finite_scgf, quad_moment, scgf_increment, t_second_moment, truncated_moments,
    truncated_raw_moment, truncation_event_rate, truncation_hit_probability, truncation_spec, untruncated_spec,
)
from remlab.theory import BETA_CRIT, LOG2, ModelParams

mp.mp.dps = 40

GRID = [(beta, n, t) for beta in (0.1, 0.3, BETA_CRIT) for n in (8, 16, 32) for t in (2.0, n ** 0.25)]


def mp_c(beta, n, t):
    beta, n, t = mp.mpf(beta), mp.mpf(n), mp.mpf(t)
    return mp.log(mp.exp(n * beta ** 2) * mp.mpf(2) ** (n / 2) / t + mp.exp(n * beta ** 2 / 2)) / (beta * mp.sqrt(n))


def mp_moment(beta, n, c, k, absolute=False):
    beta, n = mp.mpf(beta), mp.mpf(n)
    b = beta * mp.sqrt(n)

    def y(x):
        return mp.exp(-n * beta ** 2) * (mp.exp(b * x) - mp.exp(n * beta ** 2 / 2))

    def f(x):
        v = y(x) ** k
        return (abs(v) if absolute else v) * mp.npdf(x)

    x0 = b / 2
    pts = [-mp.inf, x0, c] if c > x0 else [-mp.inf, c]
    return mp.quad(f, pts)


class TestTruncationSpec:
    def test_examples(self):
        # the formula gives 5.2465215; the quoted five-decimal value 5.24650 is off in the last digit
        assert truncation_spec(ModelParams(0.3, 16), 2.0).c == pytest.approx(5.2465, abs=5e-5)
        assert truncation_spec(ModelParams(0.3, 16), 2.0).c == pytest.approx(float(mp_c(0.3, 16, 2)), rel=1e-14)
        # the defining formula gives 4.224075 here (see the decisions ledger)
        assert truncation_spec(ModelParams(0.5, 16), 3.0).c == pytest.approx(float(mp_c(0.5, 16, 3)), rel=1e-14)

    @pytest.mark.parametrize("beta,n,t", [(0.3, 16, 2.0), (0.5, 16, 3.0), (0.1, 200, 7.0), (1.5, 30, 0.1)])
    def test_against_mpmath(self, beta, n, t):
        assert truncation_spec(ModelParams(beta, n), t).c == pytest.approx(float(mp_c(beta, n, t)), rel=1e-14)

    def test_asymptotic_residual_shrinks(self):
        res = []
        for n in (100, 400, 1600):
            s = truncation_spec(ModelParams(0.3, n), 2.0)
            res.append(abs(s.c - s.c_asymptotic))
        assert res[0] >= res[1] >= res[2]
        assert res[2] < 1e-12

    def test_asymptotic_residual_at_small_n(self):
        # the neglected term is log1p(exp(-N b^2 / 2) t 2^(-N/2)) / (b sqrt(N))
        s = truncation_spec(ModelParams(0.3, 4), 2.0)
        ref = mp.log1p(mp.exp(-mp.mpf(4) * 0.09 / 2) * 2 / 4) / (0.3 * 2)
        assert s.c - s.c_asymptotic == pytest.approx(float(ref), rel=1e-10)

    @given(st.floats(min_value=0.05, max_value=2.0), st.integers(min_value=2, max_value=60),
           st.floats(min_value=0.5, max_value=50.0), st.floats(min_value=-0.5, max_value=0.5))
    @settings(max_examples=100)
    def test_threshold_equivalence(self, beta, n, t, dx):
        spec = truncation_spec(ModelParams(beta, n), t)
        x = spec.c + dx
        if abs(dx) < 1e-9:
            return
        y = mp.exp(-n * mp.mpf(beta) ** 2) * (mp.exp(spec.b * mp.mpf(x)) - mp.exp(n * mp.mpf(beta) ** 2 / 2))
        cap = mp.mpf(2) ** (mp.mpf(n) / 2) / t
        assert (y <= cap) == (x <= spec.c)

    def test_domain(self):
        with pytest.raises(DomainError):
            truncation_spec(ModelParams(0.0, 4), 2.0)
        with pytest.raises(DomainError):
            truncation_spec(ModelParams(0.3, 4), 0.0)


class TestSecondMomentOfT:
    def test_examples(self):
        assert t_second_moment(ModelParams(0.3, 10)) == pytest.approx(float(mp.expm1(0.9) / 1024), rel=1e-14)
        assert t_second_moment(ModelParams(0.3, 10)) == pytest.approx(1.42539e-3, rel=1e-5)
        assert t_second_moment(ModelParams(1e-9, 10)) < 1e-19

    def test_large_exponent(self):
        p = ModelParams(1.0, 1000)
        ref = mp.expm1(1000) / mp.mpf(2) ** 1000
        assert t_second_moment(p) == pytest.approx(float(ref), rel=1e-12)

    def test_quadrature_cross_check(self):
        p = ModelParams(0.4, 8)
        m2 = quad_moment(untruncated_spec(p), 2)
        # E[(Y e^{N b^2})^2] = E[(e^{bX - Nb^2/2} - 1)^2]; T = 2^-N sum of such terms
        assert t_second_moment(p) == pytest.approx(math.ldexp(m2 * math.exp(p.n * p.beta ** 2), -p.n), rel=1e-10)


class TestMoments:
    @pytest.mark.parametrize("beta,n", [(0.3, 12), (0.1, 4), (BETA_CRIT, 64)])
    def test_untruncated(self, beta, n):
        spec = untruncated_spec(ModelParams(beta, n))
        s2 = -math.expm1(-n * beta ** 2)
        assert truncated_raw_moment(spec, 1) == 0.0
        assert truncated_raw_moment(spec, 2) == pytest.approx(s2, rel=1e-12)
        assert quad_moment(spec, 2) == pytest.approx(s2, rel=1e-10)
        assert abs(quad_moment(spec, 1)) <= 1e-12

    @pytest.mark.parametrize("beta,n,t", [(0.3, 16, 2.0), (BETA_CRIT, 32, 2.0), (0.1, 8, 8 ** 0.25)])
    def test_against_mpmath(self, beta, n, t):
        spec = truncation_spec(ModelParams(beta, n), t)
        c = mp_c(beta, n, t)
        rep = truncated_moments(spec)
        assert rep.m1 == pytest.approx(float(mp_moment(beta, n, c, 1)), rel=1e-9)
        assert rep.m2 == pytest.approx(float(mp_moment(beta, n, c, 2)), rel=1e-9)
        assert rep.m3abs == pytest.approx(float(mp_moment(beta, n, c, 3, absolute=True)), rel=1e-9)

    @pytest.mark.parametrize("beta,n,t", GRID)
    def test_paths_agree(self, beta, n, t):
        spec = truncation_spec(ModelParams(beta, n), t)
        a = truncated_moments(spec)
        b = truncated_moments(spec, method="quadrature")
        assert a.method == "closed-form" and b.method == "quadrature"
        for name in ("m1", "m2", "m3abs"):
            x, y = getattr(a, name), getattr(b, name)
            assert abs(x - y) <= max(1e-9 * abs(y), 1e-12 if abs(y) < 1e-300 else 0.0)

    @given(st.floats(min_value=0.02, max_value=1.5), st.integers(min_value=1, max_value=64),
           st.floats(min_value=0.1, max_value=100.0))
    @settings(max_examples=60, deadline=None)
    def test_invariants(self, beta, n, t):
        rep = truncated_moments(truncation_spec(ModelParams(beta, n), t))
        assert 0.0 <= rep.m2 <= rep.s2 * (1 + 1e-12)
        assert rep.m3abs >= 0.0
        assert rep.m2 >= rep.m1 ** 2

    def test_m2_monotone_in_threshold(self):
        p = ModelParams(0.3, 16)
        m2 = [truncated_moments(truncation_spec(p, t)).m2 for t in (50.0, 10.0, 2.0, 0.5, 0.01)]
        assert all(a <= b for a, b in zip(m2, m2[1:]))

    def test_untruncated_limit(self):
        p = ModelParams(0.3, 16)
        rep = truncated_moments(truncation_spec(p, 1e-200))
        assert abs(rep.m1) <= 1e-10
        assert rep.m2 == pytest.approx(rep.s2, abs=1e-10)

    def test_scaled_moments_shrink(self):
        m1s, m3s = [], []
        for n in (40, 80, 160):
            rep = truncated_moments(truncation_spec(ModelParams(0.3, n), n ** 0.25))
            m1s.append(abs(rep.m1_scaled))
            m3s.append(rep.m3_scaled)
        assert m1s[0] > m1s[1] > m1s[2]
        assert m3s[0] > m3s[1] > m3s[2]

    def test_fallback_is_flagged(self, monkeypatch):
        monkeypatch.setattr(M, "MAX_LOST_BITS", -1.0)
        rep = truncated_moments(truncation_spec(ModelParams(0.3, 16), 2.0))
        assert rep.fallback and rep.method == "quadrature"

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            truncated_moments(truncation_spec(ModelParams(0.3, 16), 2.0), method="magic")


class TestScgf:
    def test_zero(self):
        spec = truncation_spec(ModelParams(0.3, 20), 2.0)
        assert scgf_increment(spec, 0.0) == 0.0
        assert finite_scgf(spec, 0.0) == 0.0

    def test_lambda_cap(self):
        spec = truncation_spec(ModelParams(0.3, 20), 2.0)
        with pytest.raises(DomainError):
            scgf_increment(spec, 65.0)
        with pytest.raises(DomainError):
            scgf_increment(untruncated_spec(ModelParams(0.3, 20)), 1.0)

    def test_series_oracle(self):
        spec = truncation_spec(ModelParams(0.3, 20), 2.0)
        c = mp_c(0.3, 20, 2.0)
        eps = mp.mpf(1) * 2 * mp.mpf(2) ** -10
        series = sum(eps ** k * mp_moment(0.3, 20, c, k) / mp.factorial(k) for k in range(1, 7))
        oracle = series * mp.mpf(2) ** 20 / 4
        assert scgf_increment(spec, 1.0) == pytest.approx(float(oracle), rel=1e-6)

    def test_approaches_gaussian_limit(self):
        gaps = [abs(scgf_increment(truncation_spec(ModelParams(0.3, n), n ** 0.3), 1.0) - 0.5) for n in (20, 40, 80)]
        assert gaps[0] > gaps[1] > gaps[2]

    @pytest.mark.parametrize("beta,n,t", GRID)
    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_taylor_remainder(self, beta, n, t, lam):
        spec = truncation_spec(ModelParams(beta, n), t)
        rep = truncated_moments(spec)
        eps = lam * t * 2.0 ** (-n / 2)
        lhs = abs(scgf_increment(spec, lam) * t * t / 2.0 ** n - eps * rep.m1 - eps * eps * rep.m2 / 2)
        bound = math.exp(lam) / 6 * lam ** 3 * t ** 3 * 2.0 ** (-1.5 * n) * rep.m3abs
        assert lhs <= bound * (1 + 1e-6) + 1e-300

    @pytest.mark.parametrize("lam", [-2.0, 1.0])
    def test_log_correction_small(self, lam):
        spec = truncation_spec(ModelParams(0.3, 20), 2.0)
        inc = scgf_increment(spec, lam)
        assert abs(finite_scgf(spec, lam) - inc) <= inc * inc * 4 / 2.0 ** 20

    def test_convex(self):
        spec = truncation_spec(ModelParams(0.3, 30), 2.0)
        v = [finite_scgf(spec, lam) for lam in (-2.0, -1.0, 0.0, 1.0, 2.0)]
        for a, b, c in zip(v, v[1:], v[2:]):
            assert b <= (a + c) / 2 + 1e-12

    def test_derivative_at_zero(self):
        spec = truncation_spec(ModelParams(0.3, 20), 2.0)
        h = 1e-4
        deriv = (finite_scgf(spec, h) - finite_scgf(spec, -h)) / (2 * h)
        assert deriv == pytest.approx(truncated_moments(spec).m1_scaled, abs=1e-6)


class TestChernoff:
    def test_zero(self):
        assert chernoff_bound(truncation_spec(ModelParams(0.3, 20), 2.0), 0.0) <= 0.0

    def test_approaches_half(self):
        vals = [chernoff_bound(truncation_spec(ModelParams(0.3, n), n ** 0.3), 1.0) for n in (20, 40, 80)]
        gaps = [abs(v + 0.5) for v in vals]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_monotone_in_x(self):
        spec = truncation_spec(ModelParams(0.3, 40), 40 ** 0.3)
        assert chernoff_bound(spec, 2.0) <= chernoff_bound(spec, 1.0)
        assert chernoff_bound(spec, -2.0) <= chernoff_bound(spec, -1.0)

    def test_against_grid_search(self):
        spec = truncation_spec(ModelParams(0.3, 20), 2.0)
        grid = [i / 50 for i in range(0, 201)]
        brute = min(finite_scgf(spec, lam) - lam for lam in grid)
        assert chernoff_bound(spec, 1.0) <= brute + 1e-9
        assert chernoff_bound(spec, 1.0) >= brute - 1e-3


class TestTruncationEvents:
    def test_predicted_example(self):
        spec = truncation_spec(ModelParams(0.3, 100), 100 ** 0.25)
        coef = (0.3 - LOG2 / 0.6) ** 2
        assert coef == pytest.approx(0.731444, abs=1e-6)
        assert truncation_event_rate(spec).predicted == pytest.approx(-5 * coef - math.log(100) / 20, rel=1e-14)
        assert truncation_event_rate(spec).predicted == pytest.approx(-3.8875, abs=1e-4)

    def test_exact_against_mpmath(self):
        spec = truncation_spec(ModelParams(0.3, 100), 100 ** 0.25)
        c = mp_c(0.3, 100, 100 ** 0.25)
        ref = (100 * mp.log(2) + mp.log(mp.erfc(c / mp.sqrt(2)) / 2)) / 10
        assert truncation_event_rate(spec).exact == pytest.approx(float(ref), rel=1e-12)

    def test_critical_coefficient_vanishes(self):
        spec = truncation_spec(ModelParams(BETA_CRIT, 50), 3.0)
        assert truncation_event_rate(spec).predicted == pytest.approx(-math.log(50) / 18, rel=1e-12)

    def test_hit_probability_against_mpmath(self):
        spec = truncation_spec(ModelParams(0.3, 16), 2.0)
        p = mp.erfc(mp_c(0.3, 16, 2.0) / mp.sqrt(2)) / 2
        ref = 1 - (1 - p) ** (2 ** 16)
        assert truncation_hit_probability(spec) == pytest.approx(float(ref), rel=1e-12)
