import math

import numpy as np
import pytest

from secondclass.contour import ContourSpec, epsilon, make_nodes
from secondclass.kfold import iter_tuples, kfold_integral
from secondclass.qcalc import RateParams

ND = make_nodes(ContourSpec(2.0, 16))


def test_unit_residue_k1_k2():
    assert kfold_integral(lambda z: 1 / z[:, 0], 1, ND) == pytest.approx(1.0, abs=1e-15)
    assert kfold_integral(lambda z: 1 / (z[:, 0] * z[:, 1]), 2, ND) == pytest.approx(1.0, abs=1e-14)


def test_no_residue():
    assert abs(kfold_integral(lambda z: z[:, 0] ** 3 * z[:, 1], 2, ND)) < 1e-13
    assert abs(kfold_integral(lambda z: np.ones(len(z)), 3, ND)) < 1e-13


def test_factorised():
    P = RateParams(0.3)
    nd = make_nodes(ContourSpec(2.0, 32))
    f = lambda z: np.exp(epsilon(z, P) * 0.5) / z
    one = kfold_integral(lambda z: f(z[:, 0]), 1, nd)
    three = kfold_integral(lambda z: f(z[:, 0]) * f(z[:, 1]) * f(z[:, 2]), 3, nd)
    assert abs(three - one**3) < 1e-13


def test_tuple_coverage():
    for k in (1, 2, 3):
        seen = sum(len(idx) if m is None else float(np.sum(m))
                   for idx, m in iter_tuples(6, k, symmetric=True))
        assert seen == 6**k
        full = sum(len(idx) for idx, _ in iter_tuples(6, k, symmetric=False))
        assert full == 6**k
        dist = sum(float(np.sum(np.broadcast_to(m, len(idx)))) for idx, m in iter_tuples(6, k, symmetric=True, distinct=True))
        assert dist == math.perm(6, k)


def test_symmetric_modes_agree():
    P = RateParams(0.3)

    def f(z):
        # symmetric in its arguments, vanishing on coincident pairs
        v = np.prod(np.exp(epsilon(z, P)) / z, axis=1)
        for i in range(z.shape[1]):
            for j in range(i + 1, z.shape[1]):
                v = v * (z[:, i] - z[:, j]) ** 2
        return v

    full = kfold_integral(f, 3, ND)
    sym = kfold_integral(f, 3, ND, symmetric=True)
    dist = kfold_integral(f, 3, ND, symmetric=True, distinct=True)
    assert abs(full - sym) < 1e-12 * max(1, abs(full))
    assert abs(full - dist) < 1e-12 * max(1, abs(full))


def test_bad_k():
    with pytest.raises(ValueError):
        kfold_integral(lambda z: z[:, 0], 0, ND)


def _huge(z):
    with np.errstate(over="ignore"):
        return np.exp(750.0) * np.exp(-60.0) / np.prod(z, axis=1)


def _log_huge(z):
    return 690.0 - np.sum(np.log(z), axis=1)


def test_overflow_without_log_raises():
    with pytest.raises(OverflowError):
        kfold_integral(_huge, 2, ND)


def test_overflow_scaled_fallback():
    v = kfold_integral(_huge, 2, ND, log_integrand=_log_huge)
    assert abs(v / math.exp(690.0) - 1) < 1e-13


def test_overflow_unrepresentable():
    with pytest.raises(OverflowError, match="not representable"):
        kfold_integral(_huge, 2, ND, log_integrand=lambda z: 900.0 - np.sum(np.log(z), axis=1))
