import pytest

from secondclass import checks


def test_identities_pass():
    s = checks.run_suite("identities")
    assert s["ok"], [c for c in s["checks"] if not c["ok"]]
    names = {c["name"] for c in s["checks"]}
    assert {"tau_binomial_theorem", "collapsed_m_sum", "tw2_identity", "c_mk_column_sum", "leading_coefficient"} <= names


def test_quadrature_pass():
    s = checks.run_suite("quadrature")
    assert s["ok"]
    assert all(c["worst"] < 1e-13 for c in s["checks"])


def test_mutation_detected():
    s = checks.run_suite("identities", checks.MUTATIONS["c_mk_sign"])
    assert not s["ok"]
    bad = [c["name"] for c in s["checks"] if not c["ok"]]
    assert bad == ["c_mk_column_sum"]


def test_unknown_suite():
    with pytest.raises(ValueError):
        checks.run_suite("nope")
