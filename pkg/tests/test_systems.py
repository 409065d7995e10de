from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outstab import DomainTooThinError, InfeasibleError, InputError, NumericError, builtin, eval_field
from outstab.history import History
from outstab.systems import OdeSystem, list_systems, parse_g, sample_domain, shrink_into_domain

CATALOG = [s["name"] for s in list_systems()]


def test_catalog_names():
    assert set(CATALOG) == {"decoupled_linear", "example1", "example2", "adaptive_basic",
                            "adaptive_redesigned", "spike_demo"}


@pytest.mark.parametrize("name", CATALOG)
def test_origin_is_equilibrium(name):
    sys_ = builtin(name)
    z = sys_.zero()
    assert np.all(np.asarray(sys_.field(z)) == 0.0)
    assert np.all(np.asarray(sys_.output(z)) == 0.0)
    if sys_.in_domain is not None:
        assert sys_.in_domain(z)


def test_eval_field_examples():
    ex1 = builtin("example1")
    assert np.array_equal(eval_field(ex1, [0, 0, 0]), [0, 0, 0])
    assert np.allclose(eval_field(ex1, [1, 0, 0]), [-1, 0, 1])
    assert np.allclose(eval_field(builtin("decoupled_linear"), [2.0]), [-2.0])


def test_eval_field_errors():
    with pytest.raises(InputError):
        eval_field(builtin("example1"), [1.0, 2.0])
    bad = OdeSystem("bad", 2, 1, lambda x: np.array([0.0, np.inf]), lambda x: x[:1])
    with pytest.raises(NumericError, match="coordinate 2"):
        eval_field(bad, [1.0, 1.0])


def test_example2_constants():
    sys_ = builtin("example2")
    feas = sys_.info["feasibility"]
    lam = 0.1 ** 2 * math.e / (4 * 0.5)
    K = 0.5 / (2 * (2 - 0.5 - lam))
    assert feas["lambda"] == pytest.approx(lam, rel=1e-12)
    assert feas["K"] == pytest.approx(K, rel=1e-12)
    assert feas["lambda"] == pytest.approx(0.013591, abs=1e-6)
    assert feas["K"] == pytest.approx(0.168191, abs=1e-6)
    assert feas["gain_lhs"] == pytest.approx(0.2086, abs=1e-4)
    assert feas["gain_rhs_lower_bound"] == 1.0
    assert feas["gain_rhs_min"] >= 1.0
    assert feas["feasible"]


def test_example2_infeasible_lambda():
    with pytest.raises(InfeasibleError) as info:
        builtin("example2", {"p": 1, "q": 2, "Q": 0.5})
    assert info.value.condition == "lambda_below_p_minus_Q"


def test_example2_infeasible_disk():
    with pytest.raises(InfeasibleError) as info:
        builtin("example2", {"R": 10})
    assert info.value.condition == "disk_gain_condition"
    sys_ = builtin("example2", {"R": 10}, check_feasibility=False)
    assert sys_.info["feasibility"]["violated"] == "disk_gain_condition"


def test_builtin_errors():
    with pytest.raises(InputError):
        builtin("nope")
    with pytest.raises(InputError):
        builtin("example2", {"bogus": 1})


@pytest.mark.parametrize("spec,val", [("sin", math.sin(0.5 * 2)), ("tanh", math.tanh(2.5)), ("const:0.3", 0.3)])
def test_parse_g(spec, val):
    g, bound, _ = parse_g(spec)
    assert g(0.5, 2.0) == pytest.approx(val)
    assert bound == pytest.approx(1.0 if spec != "const:0.3" else 0.3)


def test_parse_g_rejects():
    with pytest.raises(InputError):
        parse_g("cos")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_example1_lyapunov_identity(x):
    # gradient of y^2/2 + z^2/(1+z^2) dotted with the field equals -(1+w^2) y^2
    y, z, w = x
    f = eval_field(builtin("example1"), x)
    grad = np.array([y, 2 * z / (1 + z * z) ** 2, 0.0])
    expected = -(1 + w * w) * y * y
    assert float(grad @ f) == pytest.approx(expected, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("name", ["decoupled_linear", "example1", "adaptive_redesigned"])
def test_sample_domain_deterministic_and_in_ball(name, seed):
    sys_ = builtin(name)
    a = sample_domain(sys_, 2.0, 25, seed)
    b = sample_domain(sys_, 2.0, 25, seed)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.linalg.norm(x) < 2.0 for x in a)
    if sys_.in_domain is not None:
        assert all(sys_.in_domain(x) for x in a)


def test_adaptive_samples_inside_region():
    sys_ = builtin("adaptive_redesigned")
    for x in sample_domain(sys_, 3.0, 200, 4):
        assert 0.5 * x[0] ** 2 + 0.5 * x[1] ** 2 <= 2.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_example2_samples_satisfy_level_set(seed):
    sys_ = builtin("example2")
    V = sys_.info["V"]
    hs = sample_domain(sys_, 1.0, 12, seed)
    assert all(V(h) <= 0.5 for h in hs)
    assert all(h.sup_norm() <= 1.0 + 1e-12 for h in hs)


def test_sample_domain_errors():
    sys_ = builtin("decoupled_linear")
    with pytest.raises(InputError):
        sample_domain(sys_, 1.0, 0, 0)
    with pytest.raises(InputError):
        sample_domain(sys_, -1.0, 3, 0)
    thin = OdeSystem("thin", 2, 1, lambda x: -x, lambda x: x[:1], in_domain=lambda x: False)
    with pytest.raises(DomainTooThinError):
        sample_domain(thin, 1.0, 1, 0)


def test_shrink_into_domain():
    sys_ = builtin("example2")
    h = History.constant(1.0, [3.0, 3.0])
    h2 = shrink_into_domain(sys_, h)
    assert sys_.in_domain(h2)
