"""Monte Carlo of the two-class exclusion process on a finite window.

Dynamics by thinning: with N particles every event fires at total rate N,
picks a particle uniformly and a direction (right with probability p).  Only
the state at time t is recorded, so a path needs its event count
n ~ Poisson(N t) and n (particle, direction) choices; the event times never
matter.

Each path owns a Philox stream keyed by (seed, path index).  Paths are
simulated in fixed blocks, vectorised across the block, and blocks are
reduced in index order, so the output is the same for any thread count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..errors import ConfigurationError, DomainError
from ..qcalc import RateParams
from .ctmc import Window

log = logging.getLogger(__name__)

EMPTY, FIRST, SECOND = 0, 1, 2
BLOCK = 2048
Z99 = float(norm.ppf(0.995))


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Counter-based stream for one path."""
    if not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=np.array([seed, path], dtype=np.uint64)))


@dataclass
class TwoClassState:
    """Occupancy of a block of paths: occ[b, i] is the content of site window.lo + i."""

    window: Window
    occ: np.ndarray
    pos: np.ndarray  # particle positions as window offsets; column 0 is the Second (if any)
    boundary_touched: np.ndarray
    exit_attempts: np.ndarray
    has_second: bool = True

    @property
    def x_second(self) -> np.ndarray:
        if not self.has_second:
            raise DomainError("no second-class particle in this state")
        return self.pos[:, 0] + self.window.lo

    def check(self) -> None:
        """Assert the structural invariants on every path of the block."""
        n = self.occ.shape[0]
        rows = np.arange(n)[:, None]
        if not np.all(self.occ[rows, self.pos] != EMPTY):
            raise AssertionError("particle list and occupancy disagree")
        if np.count_nonzero(self.occ, axis=1).min() != self.pos.shape[1]:
            raise AssertionError("particle count not conserved")
        if self.has_second:
            if not np.all(np.count_nonzero(self.occ == SECOND, axis=1) == 1):
                raise AssertionError("expected exactly one second-class particle")
            if not np.all(self.occ[np.arange(n), self.pos[:, 0]] == SECOND):
                raise AssertionError("second-class position out of sync")
            counting_identity(self)


def counting_identity(state: TwoClassState) -> None:
    """J_zeta(x) = J_eta(x) + 1{X <= x} for every x, with J the count of particles at sites <= x."""
    zeta = np.cumsum(state.occ != EMPTY, axis=1)
    eta = np.cumsum(state.occ == FIRST, axis=1)
    sites = np.arange(state.window.size)[None, :]
    ind = (state.pos[:, :1] <= sites).astype(zeta.dtype)
    if not np.array_equal(zeta, eta + ind):
        raise AssertionError("counting identity violated")
    if np.any((state.occ == FIRST) & (state.occ == EMPTY)):
        raise AssertionError("eta <= zeta violated")


def _initial(window: Window, first_sites, second_site, n: int) -> TwoClassState:
    W = window.size
    occ = np.zeros((n, W), dtype=np.int8)
    cols = []
    if second_site is not None:
        cols.append(second_site - window.lo)
        occ[:, second_site - window.lo] = SECOND
    for s in first_sites:
        cols.append(s - window.lo)
        occ[:, s - window.lo] = FIRST
    pos = np.tile(np.array(cols, dtype=np.int64), (n, 1))
    z = np.zeros(n, dtype=bool)
    return TwoClassState(window, occ, pos, z, np.zeros(n, dtype=np.int64), second_site is not None)


def _simulate_block(params, t, window, first_sites, second_site, seed, paths, debug):
    n = len(paths)
    st = _initial(window, first_sites, second_site, n)
    N = st.pos.shape[1]
    W = window.size
    # per-path draws
    counts = np.empty(n, dtype=np.int64)
    draws = []
    for b, path in enumerate(paths):
        g = path_rng(seed, int(path))
        m = int(g.poisson(N * t)) if t > 0 else 0
        counts[b] = m
        draws.append(g.random((m, 2)))
    steps = int(counts.max()) if n else 0
    U = np.zeros((n, steps, 2))
    for b, d in enumerate(draws):
        U[b, : len(d)] = d
    init_lo, init_hi = st.occ[0, 0], st.occ[0, W - 1]
    rows = np.arange(n)
    for j in range(steps):
        live = counts > j
        who = np.minimum((U[:, j, 0] * N).astype(np.int64), N - 1)
        right = U[:, j, 1] < params.p
        step = np.where(right, 1, -1)
        src = st.pos[rows, who]
        dst = src + step
        off = (dst < 0) | (dst >= W)
        st.exit_attempts += live & off
        dstc = np.clip(dst, 0, W - 1)
        mover = st.occ[rows, src]
        target = st.occ[rows, dstc]
        into_empty = live & ~off & (target == EMPTY)
        swap = live & ~off & (mover == FIRST) & (target == SECOND)
        # moves into empty sites
        b = rows[into_empty]
        st.occ[b, dstc[b]] = mover[b]
        st.occ[b, src[b]] = EMPTY
        st.pos[b, who[b]] = dstc[b]
        # first-class particle swaps with the second-class one
        b = rows[swap]
        st.occ[b, dstc[b]] = FIRST
        st.occ[b, src[b]] = SECOND
        st.pos[b, who[b]] = dstc[b]
        st.pos[b, 0] = src[b]
        # truncation is exact until an end cell changes state
        st.boundary_touched |= (st.occ[:, 0] != init_lo) | (st.occ[:, W - 1] != init_hi)
        if debug:
            st.check()
    return st


@dataclass
class McResult:
    pmf_hat: dict[int, float]
    n_paths: int
    seed: int
    ci_halfwidth: dict[int, float]
    boundary_touch_rate: float
    exit_attempt_rate: float = 0.0
    counts: dict[int, int] = field(default_factory=dict, repr=False)


def _validate(params, t, window, n_paths, seed, needs_origin=True):
    if t < 0:
        raise DomainError("t must be >= 0")
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    if not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be a 64-bit unsigned integer")
    if needs_origin and not (window.lo <= 0 and window.hi >= 1):
        raise ConfigurationError(f"window [{window.lo},{window.hi}] must contain 0 and 1")


def _run_blocks(fn, n_paths: int, threads: int):
    blocks = [np.arange(s, min(s + BLOCK, n_paths)) for s in range(0, n_paths, BLOCK)]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, blocks))


def mc_run(params: RateParams, t: float, window: Window, n_paths: int, seed: int = 0,
           threads: int = 1, debug: bool = False) -> McResult:
    """Empirical law of X(t) for step data truncated to ``window`` (First on 1..hi, Second at 0)."""
    _validate(params, t, window, n_paths, seed)
    first = range(1, window.hi + 1)

    def block(paths):
        st = _simulate_block(params, t, window, first, 0, seed, paths, debug)
        counting_identity(st)
        return np.bincount(st.pos[:, 0], minlength=window.size), st.boundary_touched.sum(), (st.exit_attempts > 0).sum()

    parts = _run_blocks(block, n_paths, threads)
    hist = np.sum([p[0] for p in parts], axis=0)
    touched = sum(int(p[1]) for p in parts)
    exits = sum(int(p[2]) for p in parts)
    pmf, ci, counts = {}, {}, {}
    for i, c in enumerate(hist):
        x = window.lo + i
        ph = c / n_paths
        counts[x] = int(c)
        pmf[x] = float(ph)
        ci[x] = Z99 * math.sqrt(ph * (1.0 - ph) / n_paths)
    return McResult(pmf, n_paths, seed, ci, touched / n_paths, exits / n_paths, counts)


@dataclass
class OccupationResult:
    occupation: dict[int, float]
    n_paths: int
    seed: int
    ci_halfwidth: dict[int, float]
    boundary_touch_rate: float


def _occupation_result(sums, n_paths, seed, touched, window):
    occ, ci = {}, {}
    for i, c in enumerate(sums):
        ph = c / n_paths
        occ[window.lo + i] = float(ph)
        ci[window.lo + i] = Z99 * math.sqrt(ph * (1.0 - ph) / n_paths)
    return OccupationResult(occ, n_paths, seed, ci, touched / n_paths)


def mc_occupation(params: RateParams, t: float, sites, window: Window, n_paths: int, seed: int = 0,
                  threads: int = 1) -> OccupationResult:
    """Occupation frequencies of plain (single-class) ASEP started from ``sites``."""
    _validate(params, t, window, n_paths, seed, needs_origin=False)
    sites = sorted(int(s) for s in sites)
    if not sites or sites[0] < window.lo or sites[-1] > window.hi:
        raise ConfigurationError("initial sites must be nonempty and inside the window")

    def block(paths):
        st = _simulate_block(params, t, window, sites, None, seed, paths, False)
        return (st.occ == FIRST).sum(axis=0), st.boundary_touched.sum()

    parts = _run_blocks(block, n_paths, threads)
    return _occupation_result(np.sum([p[0] for p in parts], axis=0), n_paths, seed,
                              sum(int(p[1]) for p in parts), window)


def mc_two_class_marginals(params: RateParams, t: float, window: Window, n_paths: int, seed: int = 0,
                           first_sites=None, threads: int = 1):
    """First-class and (first or second) occupation frequencies from the two-class run.

    Returns (eta, zeta) as OccupationResult; compared against plain runs from
    Y and Y' = {0} u Y these check that each marginal is itself an exclusion process.
    """
    _validate(params, t, window, n_paths, seed)
    first = list(first_sites) if first_sites is not None else list(range(1, window.hi + 1))

    def block(paths):
        st = _simulate_block(params, t, window, first, 0, seed, paths, False)
        return (st.occ == FIRST).sum(axis=0), (st.occ != EMPTY).sum(axis=0), st.boundary_touched.sum()

    parts = _run_blocks(block, n_paths, threads)
    touched = sum(int(p[2]) for p in parts)
    eta = _occupation_result(np.sum([p[0] for p in parts], axis=0), n_paths, seed, touched, window)
    zeta = _occupation_result(np.sum([p[1] for p in parts], axis=0), n_paths, seed, touched, window)
    return eta, zeta
