"""Step initial condition Y = Z+: occupation, PMF and CDF series of the second-class particle.

Each series is sum_k coef_k * (k-fold contour integral).  The k-fold integrals
are evaluated either by nested trapezoidal sums over the product contour
(engine "nested") or, through the determinant identity, by the Fredholm
coefficients of the Nystrom matrix on the same nodes (engine "fredholm").
The default "hybrid" engine uses nested sums for k <= k_nested and Fredholm
coefficients above that.

Every k-term carries a factor (-1)**k relative to the printed series; this
is the convention that reproduces X(0) = 0 and agrees with the exact chain.

Direct evaluation at large positive x suffers cancellation of order
R**(k x); above ``x_direct_max`` the value is taken from the mirror site
using the particle-hole symmetry P(X <= x) = 1 - P(X <= -x-1).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contour import DEFAULT_M, MAX_M, ContourSpec, QuadNodes, default_radius, epsilon, make_nodes, pair_denominator
from .errors import ConfigurationError, DomainError
from .kfold import CHUNK, kfold_integral
from . import fredholm as _fh
from .qcalc import RateParams, q_pochhammer

log = logging.getLogger(__name__)

KINDS = ("occupation", "pmf", "cdf")
ENGINES = ("nested", "fredholm", "hybrid")
NESTED_MAX_K = 6
NESTED_BUDGET = 2 * 10**7  # distinct tuples per k before hybrid hands over to Fredholm

SUBGRID_MIN_M = 24

TASEP = RateParams(0.0)


@dataclass(frozen=True)
class SeriesSpec:
    k_max: int = 12
    term_tol: float = 1e-12
    contour: ContourSpec | None = None
    k_nested: int = 4
    engine: str = "hybrid"
    adapt: bool = True
    conv_tol: float = 1e-10
    x_direct_max: int | None = 0

    def validate(self) -> None:
        if self.k_max < 1:
            raise ConfigurationError(f"k_max must be >= 1, got {self.k_max}")
        if not self.term_tol > 0:
            raise ConfigurationError("term_tol must be > 0")
        if self.engine not in ENGINES:
            raise ConfigurationError(f"engine must be one of {ENGINES}")
        if not 1 <= self.k_nested <= NESTED_MAX_K:
            raise ConfigurationError(f"k_nested must satisfy 1 <= k_nested <= {NESTED_MAX_K}")
        if self.engine == "nested" and self.k_max > NESTED_MAX_K:
            raise ConfigurationError(f"nested engine needs k_max <= {NESTED_MAX_K}, got {self.k_max}")
        if self.x_direct_max is not None and self.x_direct_max < 0:
            raise ConfigurationError("x_direct_max must be >= 0 (or None for direct everywhere)")

    def contour_for(self, params: RateParams) -> ContourSpec:
        return self.contour or ContourSpec(default_radius(params), DEFAULT_M)


# ---------------------------------------------------------------------------
# pointwise integrands; xi has shape (..., k)
# ---------------------------------------------------------------------------


def _pair_product(xi: np.ndarray, params: RateParams) -> np.ndarray:
    k = xi.shape[-1]
    out = np.ones(xi.shape[:-1], dtype=complex)
    for i in range(k):
        for j in range(k):
            if i != j:
                a, b = xi[..., i], xi[..., j]
                out = out * (b - a) / pair_denominator(a, b, params)
    return out


def _node_product(xi, params, t, power):
    p, q = params.p, params.q
    f = xi**power * np.exp(epsilon(xi, params) * t) / ((1.0 - xi) * (q * xi - p))
    return np.prod(f, axis=-1)


def integrand_Jtilde(x: int, xi, params: RateParams, t: float = 0.0):
    """prod_{i!=j} pair * (1 - prod xi) * prod xi**(x-1) e^{eps t} / ((1-xi)(q xi - p))."""
    xi = np.asarray(xi, dtype=complex)
    P = np.prod(xi, axis=-1)
    out = _pair_product(xi, params) * (1.0 - P) * _node_product(xi, params, t, x - 1)
    return out[()] if np.ndim(out) == 0 else out


def integrand_J2(x: int, xi, params: RateParams, t: float = 0.0):
    """integrand_Jtilde with (1 - prod xi) squared."""
    xi = np.asarray(xi, dtype=complex)
    P = np.prod(xi, axis=-1)
    out = _pair_product(xi, params) * (1.0 - P) ** 2 * _node_product(xi, params, t, x - 1)
    return out[()] if np.ndim(out) == 0 else out


def integrand_J(x: int, xi, params: RateParams, t: float = 0.0):
    """prod_{i!=j} pair * (prod xi - 1) * prod xi**x e^{eps t} / ((1-xi)(q xi - p))."""
    xi = np.asarray(xi, dtype=complex)
    P = np.prod(xi, axis=-1)
    out = _pair_product(xi, params) * (P - 1.0) * _node_product(xi, params, t, x)
    return out[()] if np.ndim(out) == 0 else out


def integrand_J_tasep(x: int, xi, t: float = 0.0):
    """prod_{i!=j} (xi_j - xi_i) * (prod xi - 1) * prod xi**x e^{(xi-1)t} / (xi (1-xi))**k."""
    xi = np.asarray(xi, dtype=complex)
    k = xi.shape[-1]
    V = np.ones(xi.shape[:-1], dtype=complex)
    for i in range(k):
        for j in range(k):
            if i != j:
                V = V * (xi[..., j] - xi[..., i])
    P = np.prod(xi, axis=-1)
    f = np.prod(xi**x * np.exp((xi - 1.0) * t) / (xi * (1.0 - xi)) ** k, axis=-1)
    out = V * (P - 1.0) * f
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class SeriesResult:
    value: float
    terms: list[complex]
    converged: bool
    tail: float
    engines: list[str]
    mirrored: bool = False
    M: int = 0
    R: float = 0.0
    quad_error: float = float("nan")
    imag: float = 0.0
    roundoff: float = 0.0

    def __float__(self) -> float:
        return self.value


@dataclass
class DistTable:
    kind: str
    entries: dict[int, float]
    t: float
    params: RateParams
    results: dict[int, SeriesResult] = field(repr=False, default_factory=dict)
    M: int = 0
    R: float = 0.0
    quad_error: float = float("nan")
    tol: float = 0.0

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.results.values())

    @property
    def tail(self) -> float:
        return max((r.tail for r in self.results.values()), default=0.0)

    @property
    def mass_defect(self) -> float:
        return abs(1.0 - math.fsum(self.entries.values()))

    def diagnostics(self) -> dict:
        k_used = max((len(r.terms) for r in self.results.values()), default=0)
        per_k = [
            max((abs(r.terms[k]) for r in self.results.values() if len(r.terms) > k), default=0.0)
            for k in range(k_used)
        ]
        d = {
            "kind": self.kind,
            "t": self.t,
            "p": self.params.p,
            "R": self.R,
            "M": self.M,
            "quad_error": self.quad_error,
            "tail_estimate": self.tail,
            "converged": self.converged,
            "max_term_by_k": per_k,
            "roundoff_estimate": max((r.roundoff for r in self.results.values()), default=0.0),
            "mirrored_sites": sorted(x for x, r in self.results.items() if r.mirrored),
        }
        if self.kind == "pmf":
            d["mass_defect"] = self.mass_defect
        return d


# ---------------------------------------------------------------------------
# evaluation core
# ---------------------------------------------------------------------------


def series_coefficient(k: int, params: RateParams) -> float:
    """(-1)**k q**(k^2) / k! prod_{j<k}(1 - tau**j); TASEP gives (-1)**k / k!."""
    sign = -1.0 if k % 2 else 1.0
    return sign * params.q ** (k * k) / math.factorial(k) * q_pochhammer(k, params.tau)


def fredholm_coefficient(k: int, params: RateParams) -> float:
    """(-1)**k tau**(-k(k-1)/2) prod_{j<k}(1 - tau**j)."""
    return _fh.coefficient(k, params)


class _Evaluator:
    """Per-(params, t, nodes) cache of node factors, pair matrix and det coefficients."""

    def __init__(self, params: RateParams, t: float, nodes: QuadNodes, tasep: bool = False):
        self.params, self.t, self.nodes, self.tasep = params, t, nodes, tasep
        xi, w = nodes.nodes, nodes.weights
        if tasep:
            self.h0 = np.exp((xi - 1.0) * t) * w
            self.pp = -((xi[None, :] - xi[:, None]) ** 2)
        else:
            p, q = params.p, params.q
            self.h0 = np.exp(epsilon(xi, params) * t) / ((1.0 - xi) * (q * xi - p)) * w
            den = pair_denominator(xi[:, None], xi[None, :], params)
            pf = (xi[None, :] - xi[:, None]) / den
            self.pp = pf * pf.T
        self._c: dict[int, _fh.DetCoefficients] = {}
        self._sub: dict[int, _Evaluator | None] = {}
        self._hankel: dict[tuple[int, int], complex] = {}

    # nested -----------------------------------------------------------------
    def nested(self, k: int, kind: str, xs: np.ndarray) -> np.ndarray:
        """Ordered k-fold sums of the kind's integrand at each x (no series coefficient)."""
        xi = self.nodes.nodes
        h = self.h0 / (xi * (1.0 - xi)) ** k if self.tasep else self.h0
        # scaled arithmetic: keep per-factor magnitudes O(1), restore in log form
        hs = np.max(np.abs(h))
        ps = np.max(np.abs(self.pp)) if k > 1 else 1.0
        hn, ppn = h / hs, self.pp / ps
        if kind == "cdf":
            shift = xs  # (P - 1) P**x
        else:
            shift = xs - 1  # (1 - P) P**(x-1) or (1 - P)**2 P**(x-1)
        parts = []
        it = itertools.combinations(range(self.nodes.M), k)
        chunk = max(1, CHUNK // (4 * max(1, len(xs))))
        while True:
            flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, chunk)), dtype=np.int64)
            if flat.size == 0:
                break
            idx = flat.reshape(-1, k)
            base = np.prod(hn[idx], axis=1)
            for i in range(k):
                for j in range(i + 1, k):
                    base = base * ppn[idx[:, i], idx[:, j]]
            P = np.prod(xi[idx], axis=1)
            if kind == "cdf":
                base = base * (P - 1.0)
            elif kind == "occupation":
                base = base * (1.0 - P)
            else:
                base = base * (1.0 - P) ** 2
            parts.append((base[:, None] * P[:, None] ** shift[None, :]).sum(axis=0))
        tot = np.sum(parts, axis=0) if parts else np.zeros(len(xs), dtype=complex)
        log_scale = k * math.log(hs) + (k * (k - 1) / 2) * math.log(ps) + math.lgamma(k + 1)
        return tot * math.exp(log_scale)

    def subgrid(self, k: int) -> "_Evaluator | None":
        """Evaluator on the finest sub-grid (every 2**j-th node) where the k-fold sum is affordable.

        Used only for high-order terms that are already tiny, where the
        coarser grid's quadrature error is far below the term tolerance.
        """
        if k in self._sub:
            return self._sub[k]
        M, found = self.nodes.M, None
        while M % 2 == 0 and M // 2 >= SUBGRID_MIN_M:
            M //= 2
            if math.comb(M, k) <= NESTED_BUDGET:
                spec = ContourSpec(self.nodes.R, M)
                found = _Evaluator(self.params, self.t, make_nodes(spec), tasep=self.tasep)
                break
        self._sub[k] = found
        return found

    # fredholm ---------------------------------------------------------------
    def det_c(self, x: int, k_max: int) -> _fh.DetCoefficients:
        d = self._c.get(x)
        if d is None or len(d.c) <= k_max:
            A = _fh.build_matrix(x, self.t, self.params, self.nodes)
            d = _fh.det_coefficients(A, min(max(k_max, 12), self.nodes.M), method="eig")
            self._c[x] = d
        return d

    def fredholm(self, k: int, kind: str, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Series-ready k-terms from det coefficients, with a roundoff estimate per term."""
        coef = fredholm_coefficient(k, self.params)
        stencil = {"cdf": ((1, 1.0), (0, -1.0)), "occupation": ((0, -1.0), (-1, 1.0)),
                   "pmf": ((1, 1.0), (0, -2.0), (-1, 1.0))}[kind]
        out = np.empty(len(xs), dtype=complex)
        noise = np.empty(len(xs))
        for i, x in enumerate(xs):
            d, n = 0j, 0.0
            for off, wgt in stencil:
                dc = self.det_c(int(x) + off, k)
                d += wgt * dc.c[k]
                n += abs(wgt) * dc.noise[k]
            out[i] = coef * d
            noise[i] = abs(coef) * n
        return out, noise

    # tasep via Hankel moments ------------------------------------------------
    def hankel(self, k: int, kind: str, xs: np.ndarray) -> np.ndarray:
        xi, w = self.nodes.nodes, self.nodes.weights
        g = np.exp((xi - 1.0) * self.t) / (xi * (1.0 - xi)) ** k * w
        a = np.arange(k)
        V = xi[None, :] ** (a[:, None])  # (k, M)

        def hdet(power: int) -> complex:
            key = (k, power)
            if key not in self._hankel:
                H = (V * (g * xi**power)[None, :]) @ V.T
                self._hankel[key] = complex(np.linalg.det(H))
            return self._hankel[key]

        sign = -1.0 if (k * (k + 1) // 2) % 2 else 1.0
        out = np.empty(len(xs), dtype=complex)
        for i, x in enumerate(xs):
            x = int(x)
            if kind == "cdf":
                d = hdet(x + 1) - hdet(x)
            elif kind == "occupation":
                d = -(hdet(x) - hdet(x - 1))
            else:
                d = hdet(x + 1) - 2.0 * hdet(x) + hdet(x - 1)
            out[i] = sign * d
        return out


def _min_order(kind: str, x: int) -> int:
    # the k-th term stays O(1) up to k = arg + 1, so no early stop before arg + 2
    arg = x - 1 if kind == "occupation" else x
    return max(1, arg + 2)


def _direct_terms(ev: _Evaluator, kind: str, xs: np.ndarray, series: SeriesSpec):
    """Per-x k-terms with truncation.

    Returns (terms, engines, done, roundoff): ``done`` marks sites whose
    series met the stopping rule, ``roundoff`` the accumulated Fredholm
    roundoff estimate per site.
    """
    n = len(xs)
    terms: list[list[complex]] = [[] for _ in range(n)]
    engines: list[str] = []
    small = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    roundoff = np.zeros(n)
    kmin = np.array([_min_order(kind, int(x)) for x in xs])
    M = ev.nodes.M
    for k in range(1, series.k_max + 1):
        active = ~done
        if not active.any():
            break
        xa = xs[active]
        affordable = k <= NESTED_MAX_K and math.comb(M, k) <= NESTED_BUDGET
        if series.engine == "nested":
            if not affordable:
                raise ConfigurationError(
                    f"nested quadrature at k={k}, M={M} exceeds the work budget; lower M or use the hybrid engine"
                )
            use_nested = True
        elif series.engine == "fredholm" or ev.tasep:
            use_nested = False
        else:
            use_nested = k <= series.k_nested and affordable
        noise = np.zeros(len(xa))
        if not use_nested and not ev.tasep:
            vals, noise = ev.fredholm(k, kind, xa)
            # the tau**(-k(k-1)/2) factor can swamp the term with roundoff; fall
            # back to the nested sum when it is affordable
            if series.engine == "hybrid" and noise.max() > series.term_tol:
                sub = ev if affordable else ev.subgrid(k)
                if sub is not None:
                    use_nested = True
                    noise = np.zeros(len(xa))
        if use_nested:
            sub = ev if affordable else ev.subgrid(k)
            raw = sub.nested(k, kind, xa)
            coef = (-1.0 if k % 2 else 1.0) / math.factorial(k) if ev.tasep else series_coefficient(k, ev.params)
            if kind == "occupation":
                coef = -coef
            vals = coef * raw
            engines.append("nested" if sub is ev else f"nested@{sub.nodes.M}")
        elif ev.tasep:
            vals = ev.hankel(k, kind, xa)
            engines.append("hankel")
        else:
            engines.append("fredholm")
        for j, i in enumerate(np.flatnonzero(active)):
            terms[i].append(complex(vals[j]))
            roundoff[i] += noise[j]
            small[i] = small[i] + 1 if abs(vals[j]) < series.term_tol else 0
            if small[i] >= 2 and k >= kmin[i]:
                done[i] = True
    return terms, engines, done, roundoff


def _mirror_plan(kind: str, xs, D: int | None):
    """Map requested x -> (direct site, mirrored?)."""
    plan = {}
    for x in xs:
        x = int(x)
        arg = x - 1 if kind == "occupation" else x
        if D is None or arg <= D:
            plan[x] = (x, False)
        elif kind == "pmf":
            plan[x] = (-x, True)
        elif kind == "cdf":
            plan[x] = (-x - 1, True)
        else:
            plan[x] = (1 - x, True)
    return plan


def _evaluate_once(kind, xs, t, params, series, nodes, tasep):
    plan = _mirror_plan(kind, xs, series.x_direct_max)
    direct = np.array(sorted({v[0] for v in plan.values()}), dtype=np.int64)
    ev = _Evaluator(params, t, nodes, tasep=tasep)
    terms, engines, done, roundoff = _direct_terms(ev, kind, direct, series)
    by_site = {}
    for i, x in enumerate(direct):
        tot = complex(math.fsum(v.real for v in terms[i]), math.fsum(v.imag for v in terms[i]))
        ok = bool(done[i]) and roundoff[i] <= series.conv_tol
        by_site[int(x)] = (tot, terms[i], ok, float(roundoff[i]))
    out = {}
    for x, (src, mirrored) in plan.items():
        tot, tm, ok, rnd = by_site[src]
        val = tot.real
        if mirrored and kind != "pmf":
            val = 1.0 - val
        out[x] = SeriesResult(
            value=float(val),
            terms=tm,
            converged=ok,
            tail=2.0 * abs(tm[-1]) if tm else 0.0,
            engines=engines[: len(tm)],
            mirrored=mirrored,
            M=nodes.M,
            R=nodes.R,
            imag=float(tot.imag),
            roundoff=rnd,
        )
    return out


def step_table(
    kind: str,
    xs,
    t: float,
    params: RateParams = TASEP,
    series: SeriesSpec | None = None,
    *,
    tasep: bool = False,
) -> DistTable:
    """Evaluate one of the step-initial-condition series on a set of sites.

    With ``series.adapt`` the node count is doubled until two successive
    tables agree to ``series.conv_tol`` (or ``MAX_M`` is reached).
    """
    if kind not in KINDS:
        raise DomainError(f"kind must be one of {KINDS}")
    if t < 0:
        raise DomainError("t must be >= 0")
    series = series or SeriesSpec()
    series.validate()
    if tasep:
        params = TASEP
    elif params.tau == 0.0:
        raise DomainError("p = 0 is the TASEP point; call with tasep=True")
    xs = [int(x) for x in np.atleast_1d(xs)]
    spec = series.contour_for(params)
    spec.validate(None if tasep else params)
    res = _evaluate_once(kind, xs, t, params, series, make_nodes(spec, None if tasep else params), tasep)
    quad_err = float("nan")
    if series.adapt:
        while True:
            if spec.M * 2 > MAX_M:
                log.warning("M cap %d reached before quadrature converged (last change %.2e)", MAX_M, quad_err)
                break
            spec = spec.refined()
            finer = _evaluate_once(kind, xs, t, params, series, make_nodes(spec, None if tasep else params), tasep)
            quad_err = max(abs(finer[x].value - res[x].value) for x in xs)
            res = finer
            if quad_err < series.conv_tol:
                break
    for r in res.values():
        r.quad_error = quad_err
    tol = max(series.conv_tol, max((r.tail for r in res.values()), default=0.0))
    return DistTable(
        kind=kind,
        entries={x: res[x].value for x in xs},
        t=t,
        params=params,
        results=res,
        M=spec.M,
        R=spec.R,
        quad_error=quad_err,
        tol=tol,
    )


def pmf_step(x: int, t: float, params: RateParams, series: SeriesSpec | None = None) -> SeriesResult:
    """P(X(t) = x) for step initial data."""
    return step_table("pmf", [x], t, params, series).results[int(x)]


def cdf_step(x: int, t: float, params: RateParams, series: SeriesSpec | None = None) -> SeriesResult:
    """P(X(t) <= x) for step initial data."""
    return step_table("cdf", [x], t, params, series).results[int(x)]


def occupation_step(x: int, t: float, params: RateParams, series: SeriesSpec | None = None) -> SeriesResult:
    """P(eta_t(x) = 1) for first-class particles started on Z+."""
    return step_table("occupation", [x], t, params, series).results[int(x)]


def cdf_tasep(x: int, t: float, series: SeriesSpec | None = None) -> SeriesResult:
    """tau -> 0 limit of the CDF (only left jumps, rate 1)."""
    return step_table("cdf", [x], t, TASEP, series, tasep=True).results[int(x)]


def default_window(t: float) -> int:
    """Half-width ceil(t + 8 sqrt(t + 1) + 8) of the default site window."""
    return math.ceil(t + 8.0 * math.sqrt(t + 1.0) + 8.0)
