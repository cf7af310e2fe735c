"""Identity and quadrature suites behind ``secondclass check``.

Each check returns a record {name, ok, worst, tol, detail}; a suite passes
when every record does.  The identity suite takes the c_{m,k} implementation
as an argument so a deliberately broken one can be fed in to show the suite
notices.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import finite
from .contour import ContourSpec, make_nodes
from .fredholm import tw2_identity_residual
from .qcalc import RateParams, collapsed_m_sum, collapsed_m_sum_direct, q_binomial

IDENTITY_TOL = 1e-10
QUAD_TOL = 1e-13


def _record(name, worst, tol, detail=""):
    return {"name": name, "ok": bool(worst < tol), "worst": float(worst), "tol": tol, "detail": detail}


def tau_binomial_theorem(n_max: int = 12) -> dict:
    """sum_j [n j] (-1)^j z^j tau^(j(j-1)/2) = prod_{j<n} (1 - z tau^j)."""
    worst, where = 0.0, ""
    for tau in (0.0, 0.1, 0.5, 0.9):
        for z in (-2.0, -1.0, 0.5, 1.0, 3.0):
            for n in range(n_max + 1):
                terms = [q_binomial(n, j, tau) * (-z) ** j * tau ** (j * (j - 1) // 2) for j in range(n + 1)]
                lhs = math.fsum(terms)
                rhs = math.prod(1.0 - z * tau**j for j in range(n))
                # scale by the term sizes: the product vanishes at z = 1, tau = 0
                err = abs(lhs - rhs) / max(abs(rhs), math.fsum(abs(v) for v in terms))
                if err > worst:
                    worst, where = err, f"n={n} z={z} tau={tau}"
    return _record("tau_binomial_theorem", worst, IDENTITY_TOL, where)


def collapsed_sum(k_max: int = 10) -> dict:
    worst, where = 0.0, ""
    for tau in (0.1, 0.5, 0.9):
        for k in range(1, k_max + 1):
            a, b = collapsed_m_sum(k, tau), collapsed_m_sum_direct(k, tau, exact=True)
            err = abs(a - b) / abs(a)
            if err > worst:
                worst, where = err, f"k={k} tau={tau}"
    return _record("collapsed_m_sum", worst, IDENTITY_TOL, where)


def c_mk_column_sum(c_mk: Callable = finite.c_mk, k_max: int = 10) -> dict:
    """sum_m c_{m,k} equals the collapsed occupation coefficient."""
    worst, where = 0.0, ""
    for p in (0.1, 0.3, 0.45):
        params = RateParams(p)
        for k in range(1, k_max + 1):
            terms = [c_mk(m, k, params) for m in range(1, k + 1)]
            ref = finite.occupation_coefficient(k, params)
            err = abs(math.fsum(terms) - ref) / max(abs(ref), max(abs(v) for v in terms))
            if err > worst:
                worst, where = err, f"k={k} p={p}"
    return _record("c_mk_column_sum", worst, IDENTITY_TOL, where)


def tw2_identity(k_max: int = 5, n_tuples: int = 100, seed: int = 20240601) -> dict:
    """Determinant identity at random node tuples on |xi| = 2."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for p in (0.1, 0.3, 0.45):
        params = RateParams(p)
        for k in range(1, k_max + 1):
            for _ in range(n_tuples):
                xi = 2.0 * np.exp(2j * np.pi * rng.random(k))
                err = tw2_identity_residual(xi, params)
                if err > worst:
                    worst, where = err, f"k={k} p={p}"
    return _record("tw2_identity", worst, IDENTITY_TOL, where)


def leading_coefficient_check(n_max: int = 6) -> dict:
    worst, where = 0.0, ""
    for p in (0.1, 0.3, 0.45):
        params = RateParams(p)
        for N in range(1, n_max + 1):
            a = finite.assembled_leading_coefficient(N, params)
            b = finite.leading_coefficient(N, params)
            err = abs(a - b) / abs(b)
            if err > worst:
                worst, where = err, f"N={N} p={p}"
    return _record("leading_coefficient", worst, 1e-12, where)


def residue_exactness(cases=((2.0, 8), (2.0, 16), (2.0, 32), (2.0, 48), (3.0, 24), (1.5, 64))) -> dict:
    """sum_j w_j xi_j^m = R^(m+1) [M divides m+1], for |m| < 2M; error relative to R^(m+1)."""
    worst, where = 0.0, ""
    for R, M in cases:
        nd = make_nodes(ContourSpec(R, M))
        for m in range(-2 * M + 1, 2 * M):
            # scaled form: sum_j (w_j / R) (xi_j / R)^m against [M | m+1]
            val = np.sum((nd.weights / R) * (nd.nodes / R) ** m)
            exact = 1.0 if (m + 1) % M == 0 else 0.0
            err = abs(val - exact)
            if err > worst:
                worst, where = err, f"R={R} M={M} m={m}"
    return _record("residue_exactness", worst, QUAD_TOL, where)


def unit_residue(cases=((2.0, 32), (2.0, 48), (3.0, 64))) -> dict:
    worst = 0.0
    for R, M in cases:
        nd = make_nodes(ContourSpec(R, M))
        worst = max(worst, abs(np.sum(nd.weights / nd.nodes) - 1.0))
    return _record("unit_residue", worst, 1e-14)


def run_suite(name: str, c_mk: Callable = finite.c_mk) -> dict:
    if name == "identities":
        records = [
            tau_binomial_theorem(),
            collapsed_sum(),
            c_mk_column_sum(c_mk),
            tw2_identity(),
            leading_coefficient_check(),
        ]
    elif name == "quadrature":
        records = [residue_exactness(), unit_residue()]
    elif name == "all":
        records = run_suite("identities", c_mk)["checks"] + run_suite("quadrature")["checks"]
    else:
        raise ValueError(f"unknown suite {name!r}")
    return {"suite": name, "ok": all(r["ok"] for r in records), "checks": records}


def flipped_c_mk(m: int, k: int, params: RateParams) -> float:
    """Mutation fixture: c_{m,k} with the (-1)^(m+1) sign dropped."""
    return abs(finite.c_mk(m, k, params))


MUTATIONS = {"c_mk_sign": flipped_c_mk}
