import math

import numpy as np
import pytest

from secondclass.errors import ConfigurationError, DomainError
from secondclass.oracles.ctmc import Window, ctmc_build, ctmc_pmf
from secondclass.oracles.mc import (
    FIRST,
    SECOND,
    _initial,
    _simulate_block,
    counting_identity,
    mc_occupation,
    mc_run,
    mc_two_class_marginals,
    path_rng,
)
from secondclass.qcalc import RateParams

P3 = RateParams(0.3)
W5 = Window(-5, 5)


def test_t0_point_mass():
    r = mc_run(P3, 0.0, W5, 100, seed=3)
    assert r.pmf_hat[0] == 1.0 and sum(r.pmf_hat.values()) == 1.0
    assert r.boundary_touch_rate == 0.0 and r.ci_halfwidth[0] == 0.0


def test_occupation_t0():
    r = mc_occupation(P3, 0.0, (1, 3), Window(-3, 5), 50)
    assert [r.occupation[x] for x in range(-3, 6)] == [0, 0, 0, 0, 1, 0, 1, 0, 0]


def test_seed_reproducible_and_sensitive():
    a = mc_run(P3, 1.0, W5, 3000, seed=11)
    b = mc_run(P3, 1.0, W5, 3000, seed=11)
    c = mc_run(P3, 1.0, W5, 3000, seed=12)
    assert a.counts == b.counts
    assert a.counts != c.counts


def test_thread_invariance():
    a = mc_run(P3, 1.0, W5, 5000, seed=5, threads=1)
    b = mc_run(P3, 1.0, W5, 5000, seed=5, threads=3)
    assert a.counts == b.counts and a.boundary_touch_rate == b.boundary_touch_rate


def test_prefix_stability():
    # per-path streams: the first block's paths do not depend on n_paths
    a = _simulate_block(P3, 1.0, W5, range(1, 6), 0, 9, np.arange(50), False)
    b = _simulate_block(P3, 1.0, W5, range(1, 6), 0, 9, np.arange(80), False)
    assert np.array_equal(a.occ, b.occ[:50])


def test_debug_invariants():
    st = _simulate_block(P3, 1.5, W5, range(1, 6), 0, 0, np.arange(300), True)
    st.check()
    assert np.all(np.count_nonzero(st.occ == FIRST, axis=1) == 5)
    assert np.all(st.occ[np.arange(300), st.x_second - W5.lo] == SECOND)


def test_counting_identity_detects_corruption():
    st = _initial(W5, range(1, 6), 0, 4)
    counting_identity(st)
    st.pos[0, 0] = 2  # Second recorded at a site it does not occupy
    with pytest.raises(AssertionError):
        counting_identity(st)


def test_vs_ctmc():
    t, n = 0.5, 200_000
    mc = mc_run(P3, t, W5, n, seed=1)
    ex = ctmc_pmf(ctmc_build(P3, W5), t)
    tv = 0.5 * sum(abs(mc.pmf_hat[x] - ex.pmf[x]) for x in range(-5, 6))
    # sum over bins of the 99% half-widths bounds the TV fluctuation loosely
    band = 0.5 * sum(mc.ci_halfwidth.values())
    assert tv < band
    for x in range(-5, 6):
        hw = max(mc.ci_halfwidth[x], 2.6 * math.sqrt(ex.pmf[x] * (1 - ex.pmf[x]) / n), 1e-12)
        assert abs(mc.pmf_hat[x] - ex.pmf[x]) <= 4 * hw


def test_marginals_vs_plain_runs():
    w = Window(-8, 9)
    t, n = 0.8, 40_000
    Y = (1, 2, 3)
    eta, zeta = mc_two_class_marginals(P3, t, w, n, seed=2, first_sites=Y)
    py = mc_occupation(P3, t, Y, w, n, seed=3)
    pyp = mc_occupation(P3, t, (0,) + Y, w, n, seed=4)
    for x in range(-3, 6):
        for a, b in ((eta, py), (zeta, pyp)):
            hw = math.hypot(a.ci_halfwidth[x], b.ci_halfwidth[x])
            assert abs(a.occupation[x] - b.occupation[x]) <= 4 * hw + 1e-12


def test_marginals_vs_ctmc():
    w = Window(-6, 7)
    eta, zeta = mc_two_class_marginals(P3, 0.8, w, 40_000, seed=8, first_sites=(1, 2, 3))
    ex = ctmc_pmf(ctmc_build(P3, w, first_sites=(1, 2, 3), second_site=0), 0.8)
    for x in range(-3, 6):
        assert abs(eta.occupation[x] - ex.occupation_first[x]) <= 4 * eta.ci_halfwidth[x] + 1e-3
        assert abs(zeta.occupation[x] - ex.occupation_any[x]) <= 4 * zeta.ci_halfwidth[x] + 1e-3


def test_exit_attempts_reported():
    r = mc_run(P3, 2.0, Window(-3, 3), 2000, seed=0)
    assert 0 < r.exit_attempt_rate <= 1
    assert r.boundary_touch_rate > 0


@pytest.mark.parametrize(
    "kw,exc",
    [
        (dict(window=Window(1, 5)), ConfigurationError),
        (dict(n_paths=0), ConfigurationError),
        (dict(seed=-1), ConfigurationError),
        (dict(t=-1.0), DomainError),
    ],
)
def test_errors(kw, exc):
    args = dict(params=P3, t=1.0, window=W5, n_paths=10, seed=0)
    args.update(kw)
    with pytest.raises(exc):
        mc_run(**args)


def test_occupation_errors():
    with pytest.raises(ConfigurationError):
        mc_occupation(P3, 1.0, (), W5, 10)
    with pytest.raises(ConfigurationError):
        mc_occupation(P3, 1.0, (9,), W5, 10)
    with pytest.raises(ConfigurationError):
        path_rng(2**64, 0)
