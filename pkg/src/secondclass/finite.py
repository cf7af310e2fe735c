"""Finite initial configurations Y = {y_1 < ... < y_N}.

The k-th term of every formula here is the weighted subset sum

    T_k(x) = sum_{S subset Y, |S| = k} tau**sigma(S, Y)
             * \\oint...\\oint I(x, k, xi) prod_i xi_i**(-s_i) d^k xi

with the elements of S bound to xi_1, ..., xi_k in increasing order.  For a
fixed node tuple the subset sum factorises along Y, so it is accumulated by a
left-to-right recursion instead of enumerating subsets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .contour import ContourSpec, QuadNodes, default_radius, epsilon, make_nodes, pair_denominator, pole_ratio
from .errors import DomainError
from .kfold import CHUNK
from .qcalc import RateParams, q_binomial, q_pochhammer

MAX_SITES = 12
IMAG_TOL = 1e-9
ORDERED_BUDGET = 34 * 10**6  # ordered node tuples in the top k-fold sum (32**5 fits)
MAX_AUTO_M = 96
QUAD_TARGET = 1e-12


@dataclass(frozen=True)
class InitialConfig:
    sites: tuple[int, ...]

    def __post_init__(self) -> None:
        s = tuple(int(v) for v in self.sites)
        if not s:
            raise DomainError("Y must be nonempty")
        if s[0] < 1 or any(b <= a for a, b in zip(s, s[1:])):
            raise DomainError(f"Y must be strictly increasing positive integers, got {s}")
        if len(s) > MAX_SITES:
            raise DomainError(f"|Y| = {len(s)} exceeds the cap of {MAX_SITES}")
        object.__setattr__(self, "sites", s)

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def sites_with_zero(self) -> tuple[int, ...]:
        return (0,) + self.sites


def sigma(S, Y) -> int:
    """#{(s, y): s in S, y in Y, y <= s}, i.e. the sum of the ranks of S in Y."""
    ys = Y.sites if isinstance(Y, InitialConfig) else tuple(Y)
    rank = {y: i + 1 for i, y in enumerate(ys)}
    try:
        return sum(rank[s] for s in S)
    except KeyError as exc:
        raise DomainError(f"{exc.args[0]} is not an element of Y") from None


def c_mk(m: int, k: int, params: RateParams) -> float:
    if m < 1 or k < 1:
        raise DomainError("m and k must be positive")
    tau = params.tau
    if tau == 0.0:
        raise DomainError("c_mk carries negative powers of tau; tau = 0 is excluded")
    if m > k:
        return 0.0
    sign = 1.0 if m % 2 == 1 else -1.0
    return (
        params.q ** (k * (k - 1) / 2)
        * sign
        * tau ** (m * (m - 1) / 2 - k * m)
        * q_binomial(k - 1, k - m, tau)
    )


def occupation_coefficient(k: int, params: RateParams) -> float:
    """Prefactor of T_k in the occupation formula (sum of c_mk over m)."""
    tau = params.tau
    if tau == 0.0:
        raise DomainError("tau = 0 is excluded")
    sign = 1.0 if k % 2 == 1 else -1.0
    return sign * params.q ** (k * (k - 1) / 2) * tau ** (-k * (k + 1) / 2) * q_pochhammer(k, tau)


def leading_coefficient(N: int, params: RateParams) -> float:
    """(-1)**(N+1) prod_{j<N} (q**j - p**j)."""
    if N < 1:
        raise DomainError("N must be positive")
    out = 1.0 if N % 2 == 1 else -1.0
    for j in range(1, N):
        out *= params.q**j - params.p**j
    return out


def assembled_leading_coefficient(N: int, params: RateParams) -> float:
    """occupation_coefficient(N) * tau**sigma(Y, Y): the scalar in front of the S = Y integral."""
    return occupation_coefficient(N, params) * params.tau ** (N * (N + 1) / 2)


@dataclass
class FiniteResult:
    value: float
    imag: float
    term_magnitudes: list[float] = field(default_factory=list)
    M: int = 0
    R: float = 0.0

    def __float__(self) -> float:
        return self.value


def _subset_weight(idx: np.ndarray, table: np.ndarray) -> np.ndarray:
    """sum over s_1 < ... < s_k in Y of prod_i table[idx_i, rank(s_i)], per row of idx.

    ``table[j, r]`` holds tau**(r+1) * xi_j**(-y_{r+1}).
    """
    n, k = idx.shape
    N = table.shape[1]
    # dp[j] = weight of binding xi_1..xi_i to increasing picks among the first j sites
    dp = np.ones((n, N + 1), dtype=complex)
    for i in range(k):
        new = np.zeros_like(dp)
        new[:, 1:] = np.cumsum(dp[:, :-1] * table[idx[:, i]], axis=1)
        dp = new
    return dp[:, N]


def finite_terms(
    Y: InitialConfig,
    xs,
    t: float,
    params: RateParams,
    nodes: QuadNodes,
    k_max: int | None = None,
) -> np.ndarray:
    """Array T[k-1, i] = T_k(xs[i]) for k = 1..k_max (default |Y|)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    N = len(Y)
    k_max = N if k_max is None else min(k_max, N)
    ys = np.asarray(Y.sites, dtype=np.int64)
    xi_all, w_all = nodes.nodes, nodes.weights
    node_fac = np.exp(epsilon(xi_all, params) * t) / (xi_all * (1.0 - xi_all)) * w_all
    # ordered product over i < j of (xi_j - xi_i) / (p + q xi_i xi_j - xi_i)
    pf = (xi_all[None, :] - xi_all[:, None]) / pair_denominator(xi_all[:, None], xi_all[None, :], params)
    weight_table = (params.tau ** np.arange(1, N + 1))[None, :] * xi_all[:, None] ** (-ys[None, :])
    pow_table = xi_all[:, None] ** xs[None, :]  # xi_j**x, so prod(xi)**x is a product of lookups
    out = np.zeros((k_max, len(xs)), dtype=complex)
    for k in range(1, k_max + 1):
        # the integrand vanishes when two nodes coincide
        it = itertools.permutations(range(nodes.M), k)
        acc = np.zeros(len(xs), dtype=complex)
        while True:
            flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, CHUNK // 4)), dtype=np.int64)
            if flat.size == 0:
                break
            idx = flat.reshape(-1, k)
            xi = xi_all[idx]
            base = np.prod(node_fac[idx], axis=1)
            for i in range(k):
                for j in range(i + 1, k):
                    base = base * pf[idx[:, i], idx[:, j]]
            base = base * (1.0 - np.prod(xi, axis=1)) * _subset_weight(idx, weight_table)
            px = pow_table[idx[:, 0]]
            for i in range(1, k):
                px = px * pow_table[idx[:, i]]
            acc += (base[:, None] * px).sum(axis=0)
        out[k - 1] = acc
    return out


def default_contour(params: RateParams, t: float, n_sites: int) -> ContourSpec:
    """Radius and node count for the finite-Y sums.

    The trapezoidal error falls like ((R + p)/(q R**2))**M, while large x
    loses digits like R**(k x); small t (mild growth of exp(eps t) on the
    circle) tolerates a larger radius.  M targets a pole-ratio error of
    QUAD_TARGET, capped so the ordered k-fold sum (M**|Y| tuples) fits the
    work budget.
    """
    R = max(default_radius(params), min(3.75, 2.0 / t if t > 0 else 3.75))
    M = 2 * math.ceil(math.log(QUAD_TARGET) / math.log(pole_ratio(R, params)) / 2)
    M = min(max(M, 24), MAX_AUTO_M)
    while M > 24 and M**n_sites > ORDERED_BUDGET:
        M -= 2
    return ContourSpec(R, M)


def _evaluate(fn, params: RateParams, t: float, spec: ContourSpec | None, max_k: int):
    """Run fn(nodes) -> (values, weighted); with the default contour, double M on imaginary residue."""
    auto = spec is None
    spec = spec or default_contour(params, t, max_k)
    spec.validate(params)
    while True:
        nodes = make_nodes(spec, params)
        values, weighted = fn(nodes)
        worst = float(np.max(np.abs(values.imag))) if len(values) else 0.0
        if not auto or worst <= IMAG_TOL or (2 * spec.M) ** max_k > max(ORDERED_BUDGET, 24**max_k):
            return _finish(values, weighted, nodes)
        spec = spec.refined()


def _finish(values: np.ndarray, terms: np.ndarray, nodes: QuadNodes) -> list[FiniteResult]:
    out = []
    for i, v in enumerate(values):
        if abs(v.imag) > IMAG_TOL:
            raise ArithmeticError(
                f"imaginary residue {abs(v.imag):.2e} exceeds {IMAG_TOL}; quadrature under-resolved"
            )
        out.append(FiniteResult(float(v.real), float(v.imag), [float(abs(a)) for a in terms[:, i]], nodes.M, nodes.R))
    return out


def position_pmf_finite(Y, m: int, xs, t: float, params: RateParams, spec: ContourSpec | None = None):
    """P_Y(x_m(t) = x) for each x in ``xs`` (a scalar ``xs`` gives a single result)."""
    if not isinstance(Y, InitialConfig):
        Y = InitialConfig(tuple(Y))
    if not 1 <= m <= len(Y):
        raise DomainError(f"particle index m={m} outside 1..{len(Y)}")
    scalar = np.ndim(xs) == 0
    coef = np.array([c_mk(m, k, params) for k in range(1, len(Y) + 1)])

    def run(nodes):
        weighted = coef[:, None] * finite_terms(Y, xs, t, params, nodes)
        return _ksum(weighted), weighted

    res = _evaluate(run, params, t, spec, len(Y))
    return res[0] if scalar else res


def occupation_prob_finite(Y, xs, t: float, params: RateParams, spec: ContourSpec | None = None):
    """P_Y(eta_t(x) = 1) via the collapsed m-sum."""
    if not isinstance(Y, InitialConfig):
        Y = InitialConfig(tuple(Y))
    scalar = np.ndim(xs) == 0
    coef = np.array([occupation_coefficient(k, params) for k in range(1, len(Y) + 1)])

    def run(nodes):
        weighted = coef[:, None] * finite_terms(Y, xs, t, params, nodes)
        return _ksum(weighted), weighted

    res = _evaluate(run, params, t, spec, len(Y))
    return res[0] if scalar else res


def second_class_pmf_finite(Y, xs, t: float, params: RateParams, spec: ContourSpec | None = None):
    """P_Y(X(t) = x) = P_{Y'}(zeta_t(x) = 1) - P_Y(eta_t(x) = 1), Y' = {0} u Y."""
    if not isinstance(Y, InitialConfig):
        Y = InitialConfig(tuple(Y))
    scalar = np.ndim(xs) == 0
    # Y' contains 0, which InitialConfig rejects; shift everything right by one
    shifted = InitialConfig(tuple(s + 1 for s in Y.sites_with_zero))
    xs_arr = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    a = occupation_prob_finite(shifted, xs_arr + 1, t, params, spec)
    b = occupation_prob_finite(Y, xs_arr, t, params, spec)
    out = [
        FiniteResult(ra.value - rb.value, ra.imag - rb.imag, ra.term_magnitudes + rb.term_magnitudes, ra.M, ra.R)
        for ra, rb in zip(a, b)
    ]
    return out[0] if scalar else out


def _ksum(weighted: np.ndarray) -> np.ndarray:
    # fixed-order compensated reduction over k
    return np.array(
        [complex(math.fsum(col.real), math.fsum(col.imag)) for col in weighted.T]
    )
