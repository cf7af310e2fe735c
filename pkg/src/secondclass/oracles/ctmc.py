"""Exact transient law of the exclusion process on a closed finite window.

States are (first-class bitmask, second-class site).  The generator is built
from the same move rules as the Monte Carlo engine: a jump into an empty site
succeeds, First into Second swaps the pair, everything else (including leaving
the window) is a no-op.  The transient distribution is obtained by
uniformisation with an explicit Poisson-tail bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from ..errors import ConfigurationError
from ..qcalc import RateParams

MAX_STATES = 5_000_000
TAIL = 1e-13


@dataclass(frozen=True)
class Window:
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @classmethod
    def parse(cls, text: str) -> "Window":
        try:
            a, b = str(text).split(":")
            w = cls(int(a), int(b))
        except ValueError:
            raise ConfigurationError(f"window must look like a:b with integers, got {text!r}") from None
        if w.lo >= w.hi:
            raise ConfigurationError(f"window needs a < b, got {text!r}")
        return w


@dataclass
class CtmcSystem:
    params: RateParams
    window: Window
    first_sites: tuple[int, ...]
    second_site: int | None
    masks: np.ndarray = field(repr=False)
    second: np.ndarray = field(repr=False)  # window offset of the Second, -1 if absent
    generator: sp.csr_matrix = field(repr=False)
    uniform_rate: float
    initial: int

    @property
    def n_states(self) -> int:
        return len(self.masks)

    def occupancy(self) -> np.ndarray:
        """(n_states, n_sites) 0/1 matrix of first-class occupancy."""
        bits = np.arange(self.window.size, dtype=np.int64)
        return ((self.masks[:, None] >> bits[None, :]) & 1).astype(np.int8)


def state_count(n_sites: int, n_first: int, with_second: bool) -> int:
    c = math.comb(n_sites, n_first)
    return c * (n_sites - n_first) if with_second else c


def ctmc_build(
    params: RateParams,
    window: Window,
    first_sites=None,
    second_site: int | None = 0,
) -> CtmcSystem:
    """Enumerate the chain.  Defaults give the step configuration: Second at 0,
    First on every site 1..hi of the window."""
    if window.lo > 0 or window.hi < 1:
        raise ConfigurationError(f"window [{window.lo},{window.hi}] must contain 0 and 1")
    if first_sites is None:
        first_sites = range(1, window.hi + 1)
    first_sites = tuple(sorted(int(s) for s in first_sites))
    n = window.size
    b = len(first_sites)
    occupied = set(first_sites) | ({second_site} if second_site is not None else set())
    if any(s < window.lo or s > window.hi for s in occupied):
        raise ConfigurationError("initial particles must lie inside the window")
    if second_site is not None and second_site in first_sites:
        raise ConfigurationError("second-class site collides with a first-class site")
    with_second = second_site is not None
    count = state_count(n, b, with_second)
    if count > MAX_STATES:
        raise ConfigurationError(f"state space too large: {count} > {MAX_STATES}")

    combos = np.fromiter(
        (sum(1 << i for i in c) for c in itertools.combinations(range(n), b)),
        dtype=np.int64,
        count=math.comb(n, b),
    )
    combos.sort()
    full = (1 << n) - 1
    if with_second:
        holes = n - b
        # j-th empty site of each mask, ascending
        empty_sites = np.empty((len(combos), holes), dtype=np.int64)
        bits = np.arange(n, dtype=np.int64)
        empty = ((combos[:, None] >> bits[None, :]) & 1) == 0
        empty_sites[:] = np.nonzero(empty)[1].reshape(len(combos), holes)
        masks = np.repeat(combos, holes)
        second = empty_sites.reshape(-1)
    else:
        masks = combos
        second = np.full(len(combos), -1, dtype=np.int64)

    def lookup(m: np.ndarray, s: np.ndarray) -> np.ndarray:
        mi = np.searchsorted(combos, m)
        if not with_second:
            return mi
        below = np.bitwise_count((~m & full) & ((np.int64(1) << s) - 1)).astype(np.int64)
        return mi * (n - b) + below

    rows, cols, vals = [], [], []
    idx = np.arange(len(masks))
    for site in range(n):
        has_first = ((masks >> site) & 1) == 1
        for step, rate in ((1, params.p), (-1, params.q)):
            if rate == 0.0:
                continue
            tgt = site + step
            if tgt < 0 or tgt >= n:
                continue
            tgt_first = ((masks >> tgt) & 1) == 1
            tgt_second = second == tgt
            # First moves into an empty site or swaps with the Second
            move = has_first & ~tgt_first & ~tgt_second
            swap = has_first & tgt_second
            new_mask = masks ^ ((1 << site) | (1 << tgt))
            for sel, new_sec in ((move, second), (swap, np.full_like(second, site))):
                if sel.any():
                    rows.append(idx[sel])
                    cols.append(lookup(new_mask[sel], new_sec[sel]))
                    vals.append(np.full(sel.sum(), rate))
            if with_second:
                sec_here = second == site
                sel = sec_here & ~tgt_first
                if sel.any():
                    rows.append(idx[sel])
                    cols.append(lookup(masks[sel], np.full(sel.sum(), tgt)))
                    vals.append(np.full(sel.sum(), rate))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    N = len(masks)
    off = sp.csr_matrix((v, (r, c)), shape=(N, N))
    exit_rate = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(exit_rate)).tocsr()
    lam = float(exit_rate.max()) if N > 1 else 0.0

    init_mask = np.int64(sum(1 << (s - window.lo) for s in first_sites))
    init_sec = np.array([second_site - window.lo if with_second else 0])
    initial = int(lookup(np.array([init_mask]), init_sec)[0])
    return CtmcSystem(params, window, first_sites, second_site, masks, second, Q, lam, initial)


def transient(system: CtmcSystem, t: float, tail: float = TAIL) -> np.ndarray:
    """State distribution at time t via uniformisation."""
    pi = np.zeros(system.n_states)
    pi[system.initial] = 1.0
    lam = system.uniform_rate
    if t == 0.0 or lam == 0.0:
        return pi
    mu = lam * t
    m_max = int(poisson.isf(tail, mu)) + 1
    weights = poisson.pmf(np.arange(m_max + 1), mu)
    PT = (sp.identity(system.n_states, format="csr") + system.generator / lam).T.tocsr()
    out = weights[0] * pi
    v = pi
    for m in range(1, m_max + 1):
        v = PT @ v
        out += weights[m] * v
    return out


@dataclass
class CtmcResult:
    pmf: dict[int, float]
    boundary_mass: float
    total_mass: float
    occupation_first: dict[int, float]
    occupation_any: dict[int, float]


def ctmc_pmf(system: CtmcSystem, t: float) -> CtmcResult:
    """Law of the Second's position, site occupations and a truncation-bias proxy.

    ``boundary_mass`` is the probability that either end cell of the window
    holds a different occupancy (any class) than it did at time 0.
    """
    dist = transient(system, t)
    w = system.window
    sites = w.sites()
    occ = system.occupancy().astype(float)
    first = dist @ occ
    any_occ = occ.copy()
    pmf = {}
    if system.second_site is not None:
        any_occ[np.arange(system.n_states), system.second] = 1.0
        by_pos = np.bincount(system.second, weights=dist, minlength=w.size)
        pmf = {int(x): float(v) for x, v in zip(sites, by_pos)}
    anyv = dist @ any_occ
    init_any = any_occ[system.initial]
    changed = (any_occ[:, 0] != init_any[0]) | (any_occ[:, -1] != init_any[-1])
    return CtmcResult(
        pmf=pmf,
        boundary_mass=float(dist[changed].sum()),
        total_mass=float(dist.sum()),
        occupation_first={int(x): float(v) for x, v in zip(sites, first)},
        occupation_any={int(x): float(v) for x, v in zip(sites, anyv)},
    )
