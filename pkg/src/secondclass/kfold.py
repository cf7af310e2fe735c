"""k-fold trapezoidal sums over the product contour C_R x ... x C_R."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterator

import numpy as np

from .contour import QuadNodes

CHUNK = 1 << 18


def _index_chunks(M: int, k: int, mode: str) -> Iterator[np.ndarray]:
    if mode == "full":
        it = itertools.product(range(M), repeat=k)
    elif mode == "nondecreasing":
        it = itertools.combinations_with_replacement(range(M), k)
    elif mode == "distinct":
        it = itertools.combinations(range(M), k)
    else:
        raise ValueError(mode)
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, CHUNK)), dtype=np.int64)
        if flat.size == 0:
            return
        yield flat.reshape(-1, k)


def _multiplicity(idx: np.ndarray) -> np.ndarray:
    # k! / prod(run_length!) for sorted rows
    k = idx.shape[1]
    out = np.full(idx.shape[0], float(math.factorial(k)))
    run = np.ones(idx.shape[0])
    for c in range(1, k):
        same = idx[:, c] == idx[:, c - 1]
        run = np.where(same, run + 1, 1.0)
        out = np.where(same, out / run, out)
    return out


def iter_tuples(M: int, k: int, *, symmetric: bool, distinct: bool = False):
    """Yield (index_block, multiplicity) covering all M**k ordered tuples.

    With ``symmetric`` the integrand is assumed invariant under permutations
    of its arguments; ``distinct`` further assumes it vanishes whenever two
    arguments coincide, so repeated-index tuples are skipped.
    """
    if not symmetric:
        for idx in _index_chunks(M, k, "full"):
            yield idx, None
    elif distinct:
        f = float(math.factorial(k))
        for idx in _index_chunks(M, k, "distinct"):
            yield idx, f
    else:
        for idx in _index_chunks(M, k, "nondecreasing"):
            yield idx, _multiplicity(idx)


def kfold_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    k: int,
    nodes: QuadNodes,
    *,
    symmetric: bool = False,
    distinct: bool = False,
    log_integrand: Callable[[np.ndarray], np.ndarray] | None = None,
) -> complex:
    """Trapezoidal value of (2 pi i)^-k \\oint...\\oint integrand d^k xi.

    ``integrand`` receives an (n, k) array of node tuples and returns n values.
    If any value overflows and ``log_integrand`` (the complex logarithm of the
    integrand) is given, the sum is redone with per-chunk scaling.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    xi, w = nodes.nodes, nodes.weights
    parts = []
    with np.errstate(over="ignore", invalid="ignore"):
        for idx, mult in iter_tuples(nodes.M, k, symmetric=symmetric, distinct=distinct):
            vals = integrand(xi[idx]) * np.prod(w[idx], axis=1)
            if mult is not None:
                vals = vals * mult
            if not np.all(np.isfinite(vals)):
                if log_integrand is None:
                    raise OverflowError("integrand overflowed; supply log_integrand for the scaled fallback")
                return _kfold_scaled(log_integrand, k, nodes, symmetric, distinct)
            parts.append(_csum(vals))
    return _csum(np.array(parts))


def _kfold_scaled(log_integrand, k, nodes, symmetric, distinct) -> complex:
    # keep every chunk as (scale, normalised sum) and combine in log form
    xi, logw = nodes.nodes, np.log(nodes.weights.astype(complex))
    scales, sums = [], []
    for idx, mult in iter_tuples(nodes.M, k, symmetric=symmetric, distinct=distinct):
        lv = log_integrand(xi[idx]) + np.sum(logw[idx], axis=1)
        if mult is not None:
            lv = lv + np.log(mult)
        s = float(np.max(lv.real))
        scales.append(s)
        sums.append(_csum(np.exp(lv - s)))
    top = max(scales)
    tot = math.fsum((math.exp(s - top) * v).real for s, v in zip(scales, sums))
    toti = math.fsum((math.exp(s - top) * v).imag for s, v in zip(scales, sums))
    try:
        return complex(tot, toti) * math.exp(top)
    except OverflowError:
        raise OverflowError(f"k-fold sum has magnitude exp({top:.1f}); not representable") from None


def _csum(v: np.ndarray) -> complex:
    return complex(math.fsum(v.real), math.fsum(v.imag))
