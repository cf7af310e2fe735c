import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from secondclass.errors import DomainError
from secondclass.qcalc import (
    RateParams,
    collapsed_m_sum,
    collapsed_m_sum_direct,
    q_binomial,
    q_bracket,
    q_factorial,
    q_pochhammer,
)


def gauss_poly_coeffs(n, k):
    """Coefficients of the Gaussian polynomial [n k] by the Pascal-type recursion (independent of products)."""
    if k < 0 or k > n:
        return [0]
    if k == 0 or k == n:
        return [1]
    # [n k] = [n-1 k-1] + T^k [n-1 k]
    a = gauss_poly_coeffs(n - 1, k - 1)
    b = [0] * k + gauss_poly_coeffs(n - 1, k)
    out = [0] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return out


def poly_eval(coeffs, tau):
    return math.fsum(c * tau**i for i, c in enumerate(coeffs))


class TestRateParams:
    def test_derived(self):
        P = RateParams(0.3)
        assert P.q == pytest.approx(0.7)
        assert P.tau == pytest.approx(3 / 7)
        assert P.p + P.q == 1.0

    @pytest.mark.parametrize("p", [-0.1, 0.5, 0.7, float("nan")])
    def test_rejects(self, p):
        with pytest.raises(DomainError):
            RateParams(p)

    def test_tasep_point(self):
        assert RateParams(0.0).tau == 0.0


class TestBracket:
    def test_examples(self):
        assert q_bracket(0, 0.5) == 0
        assert q_bracket(3, 0.5) == 1.75
        assert q_bracket(5, 0) == 1

    def test_negative(self):
        with pytest.raises(DomainError):
            q_bracket(-1, 0.5)


class TestFactorial:
    def test_examples(self):
        assert q_factorial(0, 0.3) == 1
        # 1 * 1.5 * 1.75 * 1.875 (exact rational 315/64)
        assert q_factorial(4, 0.5) == pytest.approx(4.921875, rel=1e-15)
        assert q_factorial(3, 0) == 1

    def test_negative(self):
        with pytest.raises(DomainError):
            q_factorial(-2, 0.5)


class TestBinomial:
    def test_examples(self):
        assert q_binomial(3, 5, 0.5) == 0
        # 1 + T + 2T^2 + T^3 + T^4 at T = 1/2
        assert q_binomial(4, 2, 0.5) == pytest.approx(2.1875, rel=1e-15)
        assert q_binomial(7, 0, 0.9) == 1

    def test_negative_k(self):
        assert q_binomial(4, -1, 0.5) == 0

    @pytest.mark.parametrize("tau", [0.0, 0.1, 0.5, 0.9])
    def test_against_gaussian_polynomial(self, tau):
        for n in range(13):
            for k in range(n + 1):
                ref = poly_eval(gauss_poly_coeffs(n, k), tau)
                assert q_binomial(n, k, tau) == pytest.approx(ref, rel=1e-12)

    def test_symmetry_exact(self):
        for tau in (0.0, 0.1, 0.37, 0.5, 0.9):
            for n in range(13):
                for k in range(n + 1):
                    assert q_binomial(n, k, tau) == q_binomial(n, n - k, tau)

    def test_tau_zero(self):
        for n in range(13):
            for k in range(n + 1):
                assert q_binomial(n, k, 0.0) == 1.0

    @given(n=st.integers(0, 12), z=st.sampled_from([-2.0, -1.0, 0.5, 1.0, 3.0]), tau=st.sampled_from([0.0, 0.1, 0.5, 0.9]))
    def test_binomial_theorem(self, n, z, tau):
        terms = [q_binomial(n, j, tau) * (-z) ** j * tau ** (j * (j - 1) // 2) for j in range(n + 1)]
        rhs = math.prod(1 - z * tau**j for j in range(n))
        scale = max(abs(rhs), math.fsum(abs(v) for v in terms))
        assert abs(math.fsum(terms) - rhs) <= 1e-12 * scale


class TestPochhammer:
    def test_examples(self):
        assert q_pochhammer(1, 0.7) == 1
        assert q_pochhammer(3, 0.5) == 0.375
        assert q_pochhammer(4, 0) == 1

    def test_domain(self):
        with pytest.raises(DomainError):
            q_pochhammer(0, 0.5)


class TestCollapsedSum:
    def test_k1(self):
        # single term m=1: tau^{-1} [0 0] = 2; closed form (-1)^2 tau^{-1} = 2
        assert collapsed_m_sum(1, 0.5) == 2.0
        assert collapsed_m_sum_direct(1, 0.5) == 2.0

    def test_k2(self):
        assert collapsed_m_sum(2, 0.5) == pytest.approx(-4.0, rel=1e-15)
        assert collapsed_m_sum_direct(2, 0.5) == pytest.approx(-4.0, rel=1e-15)

    def test_k5(self):
        a, b = collapsed_m_sum(5, 0.9), collapsed_m_sum_direct(5, 0.9)
        assert abs(a - b) <= 1e-12 * abs(a)

    @pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
    def test_identity_exact_oracle(self, tau):
        for k in range(1, 11):
            a = collapsed_m_sum(k, tau)
            b = collapsed_m_sum_direct(k, tau, exact=True)
            assert abs(a - b) <= 1e-12 * abs(a)

    def test_float_direct_is_close(self):
        # float left-hand side cancels near tau = 1 but stays within 1e-10
        for k in range(1, 11):
            a = collapsed_m_sum(k, 0.9)
            assert abs(collapsed_m_sum_direct(k, 0.9) - a) <= 1e-10 * abs(a)

    def test_exact_oracle_rational(self):
        # tau = 1/2 is exact in binary; k = 3 closed form: tau^{-6} (1 - tau)(1 - tau^2) = 64 * 3/8 = 24
        assert collapsed_m_sum_direct(3, 0.5, exact=True) == 24.0
        assert Fraction(collapsed_m_sum(3, 0.5)) == 24

    @pytest.mark.parametrize("tau", [0.0, -0.1])
    def test_pole(self, tau):
        with pytest.raises(DomainError):
            collapsed_m_sum(2, tau)
        with pytest.raises(DomainError):
            collapsed_m_sum_direct(2, tau)
