from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outstab import InputError, IntegratorConfig, builtin, integrate, sample_domain
from outstab.certificates import (Certificate, ComparisonFn, ScalarField, Tolerance, check, check_cor1,
                                  check_prop1, check_thm1, check_thm2, dini_derivative, inverse_comparison)
from outstab.presets import PRESETS, list_presets, preset


# -- comparison functions ---------------------------------------------------

@pytest.mark.parametrize("fn", [ComparisonFn.linear(2.0), ComparisonFn.quadratic(0.5),
                                ComparisonFn.power(1.0, 3.0)])
def test_class_kinf(fn):
    assert fn(0.0) == 0.0
    assert fn.is_class_kinf()
    assert fn.is_positive_definite()


def test_capped_and_constant_not_kinf():
    assert not ComparisonFn.capped(1.0, 2.0).is_class_kinf()
    assert ComparisonFn.capped(1.0, 2.0).is_positive_definite()
    assert not ComparisonFn.constant(0.25).is_class_kinf()


def test_comparison_vectorised():
    q = ComparisonFn.quadratic(0.5)
    assert np.allclose(q(np.array([0.0, 1.0, 2.0])), [0.0, 0.5, 2.0])


@pytest.mark.parametrize("fn,v,s", [(ComparisonFn.quadratic(0.5), 2.0, 2.0), (ComparisonFn.linear(3.0), 3.0, 1.0),
                                    (ComparisonFn.power(1.0, 3.0), 8.0, 2.0)])
def test_inverse_comparison(fn, v, s):
    assert inverse_comparison(fn, v) == pytest.approx(s, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1e6))
def test_inverse_roundtrip(v):
    a = ComparisonFn.quadratic(0.5)
    assert abs(a(inverse_comparison(a, v)) - v) <= 1e-12 * max(1.0, v) * 10


def test_inverse_bracket_failure():
    with pytest.raises(Exception):
        inverse_comparison(ComparisonFn.capped(1.0, 2.0), 5.0)
    with pytest.raises(InputError):
        inverse_comparison(ComparisonFn.linear(1.0), -1.0)


# -- certificates -----------------------------------------------------------

def test_certificate_completeness():
    W = ScalarField(lambda x: 0.5 * x[0] ** 2)
    with pytest.raises(InputError):
        Certificate("thm1", W=W, a=ComparisonFn.quadratic(0.5))
    with pytest.raises(InputError):
        Certificate("thm2", V=W, W=W, rho=ComparisonFn.linear(2.0), a=ComparisonFn.quadratic(0.5))
    with pytest.raises(InputError):
        Certificate("prop1", W=W, a=ComparisonFn.quadratic(0.5))
    with pytest.raises(InputError):
        Certificate("thm9", W=W, a=ComparisonFn.quadratic(0.5))


def test_presets_listed():
    names = {p["name"] for p in list_presets()}
    assert names == set(PRESETS)
    with pytest.raises(InputError):
        preset("decoupled-thm1", builtin("example1"))


# -- Dini -------------------------------------------------------------------

def test_dini_decoupled():
    tr = integrate(builtin("decoupled_linear"), [1.0], IntegratorConfig(t_f=2.0))
    F = ScalarField(lambda x: 0.5 * x[0] ** 2)
    assert dini_derivative(F, tr, 0.0) == pytest.approx(-1.0, abs=1e-3)
    assert dini_derivative(ScalarField(lambda x: 3.0), tr, 0.5) == 0.0
    with pytest.raises(InputError):
        dini_derivative(F, tr, 1.9995)


def test_dini_example1_default_steps():
    sys_ = builtin("example1")
    V = preset("example1-thm2", sys_).V
    tr = integrate(sys_, [0.6, -0.5, 0.3], IntegratorConfig(t_f=5.0))
    for t in np.linspace(0.0, 4.0, 20):
        exact = V.closed_form_derivative(tr.state_at(t))
        assert abs(dini_derivative(V, tr, t) - exact) <= 1e-3 * (1 + abs(exact))


def test_dini_example1_fine_step():
    sys_ = builtin("example1")
    V = preset("example1-thm2", sys_).V
    tr = integrate(sys_, [0.6, -0.5, 0.3], IntegratorConfig(t_f=5.0))
    for t in np.linspace(0.1, 4.0, 20):
        exact = V.closed_form_derivative(tr.state_at(t))
        assert abs(dini_derivative(V, tr, t, (1e-5,)) - exact) <= 1e-4 * (1 + abs(exact))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dini_example2_closed_form(seed):
    sys_ = builtin("example2")
    cert = preset("example2-cor1", sys_)
    h0 = sample_domain(sys_, 1.0, 1, seed)[0]
    tr = integrate(sys_, h0, IntegratorConfig(t_f=3.0, dde_step=0.01))
    for t in (1.2, 2.0, 2.5):
        for F in (cert.V, cert.W):
            exact = F.closed_form_derivative(tr.history_at(t))
            est = dini_derivative(F, tr, t, (1e-4,))
            assert abs(est - exact) <= 1e-3 * (1 + abs(exact))


# -- checks -----------------------------------------------------------------

def _decoupled_trajs(seed=0, n=5):
    sys_ = builtin("decoupled_linear")
    return sys_, [integrate(sys_, x, IntegratorConfig(t_f=5.0)) for x in sample_domain(sys_, 1.0, n, seed)]


def test_thm1_decoupled_passes_tightly():
    sys_, trajs = _decoupled_trajs()
    rep = check_thm1(sys_, preset("decoupled-thm1", sys_), 1.0, 100, trajs)
    assert rep.overall
    assert set(rep.ids()) >= {"output_bound", "dissipation", "w_nonincreasing"}
    assert min(rep[c].margin for c in ("output_bound", "dissipation", "w_nonincreasing")) >= -1e-9


def test_thm1_zero_trajectory_margins_zero():
    sys_ = builtin("decoupled_linear")
    tr = integrate(sys_, [0.0], IntegratorConfig(t_f=1.0))
    rep = check_thm1(sys_, preset("decoupled-thm1", sys_), 1.0, 0, [tr])
    assert rep.overall
    assert rep["output_bound"].margin == 0.0


def test_thm1_example1_w_fails_with_witness():
    sys_ = builtin("example1")
    trajs = [integrate(sys_, x, IntegratorConfig(t_f=5.0)) for x in sample_domain(sys_, 1.0, 3, 1)]
    rep = check_thm1(sys_, preset("example1-w-as-thm1", sys_), 1.0, 200, trajs)
    assert not rep.overall
    cond = rep["w_nonincreasing"]
    assert not cond.verdict and cond.margin < 0 and cond.witness_state is not None


def test_thm2_example1_passes_and_gamma_zero_fails():
    sys_ = builtin("example1")
    trajs = [integrate(sys_, x, IntegratorConfig(t_f=5.0)) for x in sample_domain(sys_, 1.0, 3, 2)]
    good = check_thm2(sys_, preset("example1-thm2", sys_), 1.0, 300, trajs)
    assert good.overall
    bad = check_thm2(sys_, preset("example1-thm2-gamma0", sys_), 1.0, 300, trajs)
    assert not bad.overall
    assert not bad["w_growth_upper"].verdict
    assert bad["w_growth_upper"].witness_state is not None
    assert all(c.verdict for c in bad.conditions if c.id != "w_growth_upper")


def test_thm2_sandwich_equality_at_zero():
    sys_ = builtin("example1")
    tr = integrate(sys_, [0, 0, 0], IntegratorConfig(t_f=1.0))
    rep = check_thm2(sys_, preset("example1-thm2", sys_), 1.0, 0, [tr])
    assert rep["sandwich_lower"].margin == 0.0 and rep["sandwich_upper"].margin == 0.0


def test_prop1_decoupled_output_bound():
    sys_, trajs = _decoupled_trajs(3)
    rep = check_prop1(sys_, preset("decoupled-prop1", sys_), trajs)
    assert rep.overall
    for tr in trajs:
        assert np.all(np.abs(tr.outputs[:, 0]) <= math.sqrt(2) * abs(tr.states[0, 0]) + 1e-12)


def test_prop1_example2():
    sys_ = builtin("example2")
    trajs = [integrate(sys_, h, IntegratorConfig(t_f=5.0)) for h in sample_domain(sys_, 1.0, 4, 0)]
    rep = check_prop1(sys_, preset("example2-prop1", sys_), trajs)
    assert rep.overall
    for tr in trajs:
        bound = (2 * 0.5 + 1) * tr.history_at(0.0).sup_norm() ** 2
        assert np.all(tr.outputs[:, 0] ** 2 <= bound + 1e-9)


def test_cor1_zero_history():
    sys_ = builtin("example2")
    tr = integrate(sys_, sys_.zero(), IntegratorConfig(t_f=2.0))
    rep = check_cor1(sys_, preset("example2-cor1", sys_), 1.0, 0, [tr])
    assert rep.overall
    assert all(c.margin == 0.0 for c in rep.conditions if c.id != "sup_bounded")


def test_cor1_inflated_radius_violation():
    sys_ = builtin("example2", {"R": 10.0}, check_feasibility=False)
    rep = check_cor1(sys_, preset("example2-cor1", sys_), 10.0, 200, seed=0)
    cond = rep["w_nonincreasing"]
    assert not cond.verdict
    assert np.linalg.norm(cond.witness_state["x0"]) > 1.0


def test_check_dispatch_and_targeting():
    sys_, trajs = _decoupled_trajs()
    assert check(sys_, preset("decoupled-prop1", sys_), trajs=trajs).target == "prop1"
    with pytest.raises(InputError):
        check_thm2(sys_, preset("decoupled-thm1", sys_), 1.0, 10)
    with pytest.raises(InputError):
        check_cor1(sys_, preset("decoupled-thm1", sys_), 1.0, 10)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_tolerance_monotone(seed):
    # enlarging the tolerance never flips a pass to a fail
    sys_ = builtin("example1")
    trajs = [integrate(sys_, x, IntegratorConfig(t_f=3.0)) for x in sample_domain(sys_, 1.0, 2, seed)]
    cert = preset("example1-thm2-gamma0", sys_)
    verdicts = []
    for tol in (Tolerance(0.0, 0.0), Tolerance(), Tolerance(1e-2, 1e-2), Tolerance(1.0, 1.0)):
        rep = check_thm2(sys_, cert, 1.0, 100, trajs, tol=tol, seed=seed)
        verdicts.append([c.verdict for c in rep.conditions])
    for a, b in zip(verdicts, verdicts[1:]):
        assert all(y or not x for x, y in zip(a, b))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pass_implies_sorted_w(seed):
    sys_, trajs = _decoupled_trajs(seed)
    cert = preset("decoupled-thm1", sys_)
    rep = check_thm1(sys_, cert, 1.0, 20, trajs, seed=seed)
    assert rep["w_nonincreasing"].verdict
    for tr in trajs:
        w = np.array([cert.W(x) for x in tr.states])
        assert np.all(np.diff(w) <= 1e-6)


def test_report_to_dict():
    sys_, trajs = _decoupled_trajs()
    d = check_thm1(sys_, preset("decoupled-thm1", sys_), 1.0, 10, trajs).to_dict()
    assert d["overall"] == "pass"
    assert {"id", "verdict", "margin", "witness_t", "witness_state"} <= set(d["conditions"][0])


def test_adaptive_thm3_all_zero_at_origin():
    sys_ = builtin("adaptive_redesigned")
    tr = integrate(sys_, [0.0, 0.0], IntegratorConfig(t_f=1.0))
    rep = check_thm1(sys_, preset("adaptive-thm3", sys_), 2.0, 0, [tr])
    assert rep.overall
    assert all(c.margin == 0.0 for c in rep.conditions if c.id != "sup_bounded")


def test_fd_mode_agrees_with_closed_form():
    # the certificate is tight (dV = -rho(W) exactly), so the forward quotient's
    # O(h) bias must sit below the tolerance: a single small step does
    sys_, trajs = _decoupled_trajs()
    cert = preset("decoupled-thm1", sys_)
    a = check_thm1(sys_, cert, 1.0, 20, trajs, dini="auto")
    b = check_thm1(sys_, cert, 1.0, 20, trajs, dini="fd", h_list=(1e-5,))
    assert a.overall and b.overall
    assert a["dissipation"].margin == pytest.approx(b["dissipation"].margin, abs=1e-4)


def test_fd_default_steps_overshoot_tight_certificate():
    # the 1e-3 step inflates the estimate by about h * y^2, beyond the tolerance
    sys_, trajs = _decoupled_trajs()
    rep = check_thm1(sys_, preset("decoupled-thm1", sys_), 1.0, 20, trajs, dini="fd")
    assert not rep["dissipation"].verdict
    assert rep["dissipation"].margin > -2e-3

