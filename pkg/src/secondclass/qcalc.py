"""tau-deformed combinatorics: brackets, factorials, binomials, Pochhammer products.

Everything is evaluated as products of brackets in double precision.  The
Gaussian-polynomial expansion lives in the test-suite as an oracle only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DomainError


@dataclass(frozen=True)
class RateParams:
    """Jump rates of the exclusion process.

    ``p`` is the only free parameter; ``q = 1 - p`` and ``tau = p / q`` are
    derived once at construction.
    """

    p: float
    q: float = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self) -> None:
        p = float(self.p)
        if not (0.0 <= p < 0.5):
            raise DomainError(f"need 0 <= p < q = 1 - p, got p={p!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", 1.0 - p)
        object.__setattr__(self, "tau", p / (1.0 - p))


def _check_nonneg(n: int) -> None:
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")


def q_bracket(n: int, tau: float) -> float:
    """[n] = 1 + tau + ... + tau**(n-1)."""
    _check_nonneg(n)
    if n == 0:
        return 0.0
    if tau == 0.0:
        return 1.0
    return (1.0 - tau**n) / (1.0 - tau)


def q_factorial(n: int, tau: float) -> float:
    _check_nonneg(n)
    out = 1.0
    for j in range(1, n + 1):
        out *= q_bracket(j, tau)
    return out


def q_binomial(n: int, k: int, tau: float) -> float:
    """tau-binomial coefficient; zero outside 0 <= k <= n."""
    if k < 0 or n < 0 or k > n:
        return 0.0
    # product form over the shorter side keeps symmetry bit-exact
    k = min(k, n - k)
    num = 1.0
    den = 1.0
    for j in range(1, k + 1):
        num *= q_bracket(n - k + j, tau)
        den *= q_bracket(j, tau)
    return num / den


def q_pochhammer(k: int, tau: float) -> float:
    """prod_{j=1}^{k-1} (1 - tau**j)."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    out = 1.0
    for j in range(1, k):
        out *= 1.0 - tau**j
    return out


def collapsed_m_sum(k: int, tau: float) -> float:
    """Closed form of sum_m (-1)**(m+1) tau**(m(m-1)/2 - k m) [k-1, k-m].

    Equals (-1)**(k+1) tau**(-k(k+1)/2) prod_{j<k} (1 - tau**j).
    """
    _check_m_sum_args(k, tau)
    sign = 1.0 if k % 2 == 1 else -1.0
    return sign * tau ** (-k * (k + 1) / 2) * q_pochhammer(k, tau)


def collapsed_m_sum_direct(k: int, tau: float, exact: bool = False) -> float:
    """The explicit m-sum that :func:`collapsed_m_sum` closes; kept for checking.

    The alternating terms cancel heavily near tau = 1 (about 5 digits lost at
    k = 10, tau = 0.9); ``exact`` evaluates the sum in rational arithmetic on
    the binary value of tau and rounds once at the end.
    """
    _check_m_sum_args(k, tau)
    if exact:
        T = Fraction(tau)
        tot = Fraction(0)
        for m in range(1, k + 1):
            e = m * (m - 1) // 2 - k * m
            tot += (-1) ** (m + 1) * T**e * _gauss_binomial_exact(k - 1, k - m, T)
        return float(tot)
    terms = [
        (-1.0) ** (m + 1) * tau ** (m * (m - 1) / 2 - k * m) * q_binomial(k - 1, k - m, tau)
        for m in range(1, k + 1)
    ]
    return math.fsum(terms)


def _gauss_binomial_exact(n: int, k: int, T: Fraction) -> Fraction:
    if k < 0 or k > n:
        return Fraction(0)
    out = Fraction(1)
    for j in range(1, k + 1):
        out = out * (1 - T ** (n - k + j)) / (1 - T**j)
    return out


def _check_m_sum_args(k: int, tau: float) -> None:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if tau <= 0.0:
        raise DomainError("tau = 0 is a pole of the collapsed m-sum; use the tau -> 0 path")
