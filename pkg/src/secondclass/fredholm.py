"""Nystrom discretisation of the kernel K_{x,t} and its Fredholm-determinant coefficients.

With nodes xi_j and weights w_j on |xi| = R the operator K_{x,t} becomes the
matrix A_ij = K(xi_i, xi_j) w_j, and det(I - lambda A) = sum_k c_k lambda**k.
The coefficients are read off the eigenvalues (default) or from power traces
through Newton's identities; the trace route loses several digits at small
tau and is kept as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .contour import QuadNodes, epsilon, pair_denominator
from .errors import DomainError
from .qcalc import RateParams, q_pochhammer

EPS = np.finfo(float).eps


def kernel_eval(xi, xi_prime, x: int, t: float, params: RateParams):
    """q (xi')**x exp(eps(xi') t) / (p + q xi xi' - xi)."""
    den = pair_denominator(xi, xi_prime, params)
    xi_prime = np.asarray(xi_prime, dtype=complex)
    num = params.q * xi_prime**x * np.exp(epsilon(xi_prime, params) * t)
    out = num / den
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class KernelMatrix:
    entries: np.ndarray
    x: int
    t: float
    nodes: QuadNodes


def build_matrix(x: int, t: float, params: RateParams, nodes: QuadNodes) -> KernelMatrix:
    xi = nodes.nodes
    col = params.q * xi**x * np.exp(epsilon(xi, params) * t) * nodes.weights
    den = pair_denominator(xi[:, None], xi[None, :], params)
    A = col[None, :] / den
    return KernelMatrix(A, x, t, nodes)


@dataclass
class DetCoefficients:
    """Coefficients c_k of lambda**k in det(I - lambda A), k = 0..k_max.

    ``noise[k]`` is a first-order roundoff bound for c_k: a backward error
    eps ||A|| in each eigenvalue propagated through e_k.
    """

    c: np.ndarray
    traces: np.ndarray = field(repr=False)
    method: str = "eig"
    noise: np.ndarray | None = None


def power_traces(A: np.ndarray, k_max: int) -> np.ndarray:
    tr = np.zeros(k_max + 1, dtype=complex)
    tr[0] = A.shape[0]
    P = np.eye(A.shape[0], dtype=complex)
    for r in range(1, k_max + 1):
        P = P @ A
        tr[r] = np.trace(P)
    return tr


def newton_coefficients(traces: np.ndarray) -> np.ndarray:
    """c_k of det(I - lambda A) from t_r = tr(A**r).

    k c_k = -sum_{r=1}^k t_r c_{k-r}; this is the e_k recursion with the
    sign (-1)**k folded in.
    """
    k_max = len(traces) - 1
    c = np.zeros(k_max + 1, dtype=complex)
    c[0] = 1.0
    for k in range(1, k_max + 1):
        c[k] = -np.dot(traces[1 : k + 1], c[k - 1 :: -1][:k]) / k
    return c


def _elementary(values: np.ndarray, k_max: int) -> np.ndarray:
    # coefficients of prod(1 - z v), i.e. (-1)**k e_k(values)
    e = np.zeros(k_max + 1, dtype=values.dtype)
    e[0] = 1.0
    for z in values:
        e[1:] = e[1:] - z * e[:-1]
    return e


def det_coefficients(A, k_max: int, method: str = "eig") -> DetCoefficients:
    if isinstance(A, KernelMatrix):
        A = A.entries
    M = A.shape[0]
    if k_max > M:
        raise DomainError(f"k_max={k_max} exceeds matrix size {M}")
    if method == "newton":
        tr = power_traces(A, k_max)
        return DetCoefficients(newton_coefficients(tr), tr, method)
    if method == "eig":
        lam = np.linalg.eigvals(A)
        c = _elementary(lam, k_max)
        tr = np.array([np.sum(lam**r) if r else M for r in range(k_max + 1)])
        # d e_k / d lambda_i is bounded by e_{k-1}(|lambda|); k such factors
        ea = np.abs(_elementary(-np.abs(lam), k_max))
        noise = np.zeros(k_max + 1)
        noise[1:] = EPS * np.linalg.norm(A, 2) * np.arange(1, k_max + 1) * ea[:-1]
        return DetCoefficients(c, tr, method, noise)
    raise ValueError(f"unknown method {method!r}")


def coefficient(k: int, params: RateParams) -> float:
    """(-1)**k tau**(-k(k-1)/2) prod_{j<k}(1 - tau**j).

    Turns a determinant coefficient into the k-th term of the step series.
    """
    tau = params.tau
    if tau == 0.0:
        raise DomainError("the Fredholm form needs tau > 0; use the TASEP series")
    sign = -1.0 if k % 2 else 1.0
    return sign * math.exp(-k * (k - 1) / 2 * math.log(tau)) * q_pochhammer(k, tau)


@dataclass
class FredholmValue:
    value: float
    terms: list[complex]
    roundoff: float
    imag: float


def _series(diff, k_max: int, params: RateParams, xs_needed, t, nodes, method):
    co = {x: det_coefficients(build_matrix(x, t, params, nodes), min(k_max, nodes.M), method) for x in xs_needed}
    terms, noise = [], 0.0
    for k in range(1, min(k_max, nodes.M) + 1):
        ck = coefficient(k, params)
        d, n = diff({x: (co[x].c[k], 0.0 if co[x].noise is None else co[x].noise[k]) for x in co})
        terms.append(ck * d)
        noise += abs(ck) * n
    tot = complex(math.fsum(v.real for v in terms), math.fsum(v.imag for v in terms))
    return FredholmValue(tot.real, terms, noise, tot.imag)


def cdf_direct(x: int, t: float, params: RateParams, nodes: QuadNodes, k_max: int = 8,
               method: str = "eig") -> FredholmValue:
    """P(X(t) <= x) as sum_{k<=k_max} coef_k (c_k(x+1) - c_k(x)) on fixed nodes, no truncation or mirror."""

    def diff(c):
        return c[x + 1][0] - c[x][0], c[x + 1][1] + c[x][1]

    return _series(diff, k_max, params, (x, x + 1), t, nodes, method)


def pmf_direct(x: int, t: float, params: RateParams, nodes: QuadNodes, k_max: int = 8,
               method: str = "eig") -> FredholmValue:
    """P(X(t) = x) as the second difference sum_k coef_k (c_k(x+1) - 2 c_k(x) + c_k(x-1))."""

    def diff(c):
        return c[x + 1][0] - 2.0 * c[x][0] + c[x - 1][0], c[x + 1][1] + 2.0 * c[x][1] + c[x - 1][1]

    return _series(diff, k_max, params, (x - 1, x, x + 1), t, nodes, method)


def cdf_via_fredholm(x: int, t: float, params: RateParams, series=None):
    """P(X(t) <= x) with every k-term taken from determinant coefficients.

    Same truncation, refinement and mirror policy as the step series; returns
    its SeriesResult.
    """
    from dataclasses import replace

    from .step import SeriesSpec, step_table

    if params.tau == 0.0:
        raise DomainError("the Fredholm form needs tau > 0; use the TASEP series")
    series = replace(series or SeriesSpec(k_max=8), engine="fredholm")
    return step_table("cdf", [x], t, params, series).results[int(x)]


def pmf_via_fredholm(x: int, t: float, params: RateParams, series=None):
    """P(X(t) = x) from determinant coefficients (second difference in x)."""
    from dataclasses import replace

    from .step import SeriesSpec, step_table

    if params.tau == 0.0:
        raise DomainError("the Fredholm form needs tau > 0; use the TASEP series")
    series = replace(series or SeriesSpec(k_max=8), engine="fredholm")
    return step_table("pmf", [x], t, params, series).results[int(x)]


def tw2_identity_residual(xi, params: RateParams, dps: int | None = 50) -> float:
    """Relative residual of the pointwise determinant identity at xi = (xi_1..xi_k).

    det[1/(p + q xi_i xi_j - xi_i)] equals
    (-1)**k (p q)**(k(k-1)/2) prod_{i!=j} (xi_j - xi_i)/(p + q xi_i xi_j - xi_i)
    times prod_i 1/((1 - xi_i)(q xi_i - p)).  This is what turns the k-fold
    series integrand into a k x k minor of the kernel.

    The determinant side is badly conditioned when two nodes are close or p is
    small (double precision loses up to ~8 digits at k = 5), so both sides are
    evaluated with ``dps`` decimal digits; ``dps=None`` uses plain floats.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    k = len(xi)
    pair_denominator(xi[:, None], xi[None, :], params)  # pole guard
    if dps is None:
        p, q = params.p, params.q
        den = p + q * xi[:, None] * xi[None, :] - xi[:, None]
        lhs = complex(np.linalg.det(1.0 / den))
        rhs = (-1.0) ** k * (p * q) ** (k * (k - 1) / 2) * complex(np.prod(1.0 / ((1.0 - xi) * (q * xi - p))))
        for i in range(k):
            for j in range(k):
                if i != j:
                    rhs *= (xi[j] - xi[i]) / den[i, j]
        scale = max(abs(lhs), abs(rhs))
        return float(abs(lhs - rhs) / scale) if scale > 0 else 0.0
    with mpmath.workdps(dps):
        p, q = mpmath.mpf(params.p), 1 - mpmath.mpf(params.p)
        z = [mpmath.mpc(v.real, v.imag) for v in xi]
        den = [[p + q * z[i] * z[j] - z[i] for j in range(k)] for i in range(k)]
        lhs = mpmath.det(mpmath.matrix([[1 / den[i][j] for j in range(k)] for i in range(k)]))
        rhs = (-1) ** k * (p * q) ** (k * (k - 1) // 2)
        for i in range(k):
            rhs /= (1 - z[i]) * (q * z[i] - p)
            for j in range(k):
                if i != j:
                    rhs *= (z[j] - z[i]) / den[i][j]
        scale = max(abs(lhs), abs(rhs))
        return float(abs(lhs - rhs) / scale) if scale > 0 else 0.0
