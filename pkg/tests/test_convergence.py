from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outstab import InputError, IntegratorConfig, NumericError, builtin, integrate
from outstab.certificates import Certificate, ComparisonFn, ScalarField
from outstab.convergence import (analytic_bound, analytic_T, empirical_conv_time, envelope,
                                 rho_interval_min, uniformity_sweep)
from outstab.integrate import Trajectory
from outstab.presets import preset


@pytest.fixture(scope="module")
def decoupled():
    sys_ = builtin("decoupled_linear")
    return sys_, preset("decoupled-thm1", sys_)


def test_analytic_T_decoupled(decoupled):
    sys_, cert = decoupled
    b = analytic_bound(cert, sys_, 0.1, 1.0)
    assert b.rho_tilde == pytest.approx(0.01, rel=1e-9)
    assert b.sup_V == pytest.approx(0.5 * b.inflation, rel=1e-6)
    assert b.T == pytest.approx(150.0, rel=0.02)


def test_analytic_T_adaptive():
    sys_ = builtin("adaptive_redesigned")
    b = analytic_bound(preset("adaptive-thm3", sys_), sys_, 0.1, 2.0)
    assert b.sup_V / b.inflation == pytest.approx(2.0, rel=1e-6)
    assert b.T == pytest.approx(300.0, rel=0.02)


def test_analytic_T_left_endpoint(decoupled):
    # a(eps) = sup W with increasing rho: the minimum sits at the left end
    sys_, cert = decoupled
    b = analytic_bound(cert, sys_, 1.0, 1.0, inflation=1.0)
    assert b.rho_tilde == pytest.approx(cert.rho(cert.a(1.0)), rel=1e-12)
    assert b.T == pytest.approx((1 + b.sup_V) / cert.rho(cert.a(1.0)), rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_analytic_T_monotone(e1, e2, r1, r2):
    sys_ = builtin("decoupled_linear")
    cert = preset("decoupled-thm1", sys_)
    lo_e, hi_e = sorted((e1, e2))
    lo_r, hi_r = sorted((r1, r2))
    T = lambda e, r: analytic_T(cert, sys_, e, r, N_sup=64, N_min=64, inflation=1.0)
    assert T(hi_e, lo_r) <= T(lo_e, lo_r) * (1 + 1e-9)
    assert T(lo_e, lo_r) <= T(lo_e, hi_r) * (1 + 1e-9)
    # closed form of the oracle
    assert T(lo_e, hi_r) == pytest.approx((1 + 0.5 * hi_r ** 2) / lo_e ** 2, rel=1e-6)


def test_analytic_T_rejects_non_positive_rho(decoupled):
    sys_, cert = decoupled
    bad = Certificate("thm1", V=cert.V, W=cert.W, rho=ComparisonFn.custom(lambda s: 0.0 * s),
                      a=cert.a)
    with pytest.raises(NumericError):
        analytic_T(bad, sys_, 0.1, 1.0)


def test_analytic_T_wrong_target(decoupled):
    sys_, _ = decoupled
    with pytest.raises(InputError):
        analytic_T(preset("decoupled-prop1", sys_), sys_, 0.1, 1.0)


def test_rho_interval_min_golden():
    rho = ComparisonFn.custom(lambda s: (s - 0.3123) ** 2 + 1.0)
    assert rho_interval_min(rho, 0.0, 1.0) == pytest.approx(1.0, abs=1e-10)


def test_empirical_conv_time_exact():
    sys_ = builtin("decoupled_linear")
    tr = integrate(sys_, [1.0], IntegratorConfig(t_f=10.0))
    assert empirical_conv_time(tr, 0.1) == pytest.approx(math.log(10.0), abs=1e-4)
    tr0 = integrate(sys_, [0.0], IntegratorConfig(t_f=10.0))
    assert empirical_conv_time(tr0, 0.1) == 0.0


def test_empirical_conv_time_not_converged():
    t = np.linspace(0.0, 10.0, 11)
    states = np.full((11, 1), 0.2)
    tr = Trajectory(builtin("decoupled_linear"), t, states, states.copy(), t, states, np.zeros_like(states))
    assert math.isinf(empirical_conv_time(tr, 0.1))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv_time_monotone_in_eps(seed):
    sys_ = builtin("example1")
    x0 = np.random.default_rng(seed).uniform(-1, 1, 3)
    tr = integrate(sys_, x0, IntegratorConfig(t_f=15.0))
    eps = [0.001, 0.01, 0.05, 0.2]
    times = [empirical_conv_time(tr, e) for e in eps]
    assert all(a >= b for a, b in zip(times, times[1:]))


def test_sweep_decoupled(decoupled):
    sys_, cert = decoupled
    rep = uniformity_sweep(sys_, cert, 0.1, 1.0, 100, seed=0)
    assert rep.verdict == "uniform-consistent"
    assert rep.T_emp_sup == pytest.approx(math.log(10.0), abs=1e-3)
    assert rep.T_emp_sup == max(s.T_emp for s in rep.samples)
    d = rep.to_dict()
    assert d["seed"] == 0 and d["T_analytic"] == rep.T_analytic


def test_sweep_single_zero_sample(decoupled):
    sys_, cert = decoupled
    rep = uniformity_sweep(sys_, cert, 0.1, 1.0, 1, seed=0, initial_states=[np.zeros(1)])
    assert rep.T_emp_sup == 0.0


def test_sweep_without_certificate_is_inconclusive(decoupled):
    sys_, _ = decoupled
    rep = uniformity_sweep(sys_, None, 0.1, 1.0, 5, seed=1)
    assert rep.verdict == "inconclusive" and rep.T_analytic is None


def test_sweep_flags_violation(decoupled):
    # a deliberately too-optimistic rho makes the bound smaller than ln 10
    sys_, cert = decoupled
    fast = Certificate("thm1", V=cert.V, W=cert.W, rho=ComparisonFn.linear(1e4), a=cert.a)
    rep = uniformity_sweep(sys_, fast, 0.1, 1.0, 10, seed=2)
    assert rep.T_analytic < math.log(10.0)
    assert rep.verdict == "bound-violated"
    assert rep.witness.T_emp == rep.T_emp_sup


def test_sweep_requires_samples(decoupled):
    sys_, cert = decoupled
    with pytest.raises(InputError):
        uniformity_sweep(sys_, cert, 0.1, 1.0, 0, seed=0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sweep_respects_bound_adaptive(seed):
    sys_ = builtin("adaptive_redesigned")
    cert = preset("adaptive-thm3", sys_)
    rep = uniformity_sweep(sys_, cert, 0.1, 2.0, 20, seed=seed, N_sup=512)
    assert all(s.T_emp <= rep.T_analytic for s in rep.samples)


def test_sweep_threads_deterministic(decoupled):
    sys_, cert = decoupled
    a = uniformity_sweep(sys_, cert, 0.1, 1.0, 12, seed=4)
    b = uniformity_sweep(sys_, cert, 0.1, 1.0, 12, seed=4, threads=3)
    assert [s.T_emp for s in a.samples] == [s.T_emp for s in b.samples]


def test_envelope_decoupled():
    sys_ = builtin("decoupled_linear")
    radii = [0.0, 0.5, 1.0, 2.0]
    times = [0.0, 0.5, 1.0, 2.0]
    tab = envelope(sys_, radii, times, N=40, seed=0)
    assert np.all(tab.zeta[0] == 0.0) and np.all(tab.M[:, 0] == 0.0)
    assert np.allclose(tab.zeta[1:], radii[1:], rtol=0.05)
    expected = np.outer(np.exp(-np.array(times)), radii)
    assert np.allclose(tab.M[:, 1:], expected[:, 1:], rtol=0.05)
    assert np.all(np.diff(tab.zeta) >= 0)
    assert np.all(np.diff(tab.M, axis=1) >= 0)
    assert np.all(tab.M <= tab.zeta[None, :] + 1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_envelope_invariants_example1(seed):
    tab = envelope(builtin("example1"), [0.25, 0.5, 1.0], [0.0, 1.0, 3.0], N=8, seed=seed,
                   cfg=IntegratorConfig(t_f=3.0))
    assert np.all(np.diff(tab.zeta) >= 0)
    assert np.all(np.diff(tab.M, axis=1) >= 0)
    assert np.all(tab.M <= tab.zeta[None, :] + 1e-15)


def test_envelope_validation():
    sys_ = builtin("decoupled_linear")
    with pytest.raises(InputError):
        envelope(sys_, [1.0, 0.5], [0.0], 5, 0)
    with pytest.raises(InputError):
        envelope(sys_, [], [0.0], 5, 0)


def test_envelope_zeta_at():
    tab = envelope(builtin("decoupled_linear"), [0.5, 1.0], [0.0, 1.0], N=10, seed=0)
    assert tab.zeta_at(0.7) == tab.zeta[1]
    with pytest.raises(InputError):
        tab.zeta_at(3.0)


def test_custom_scalar_field_certificate_runs():
    sys_ = builtin("decoupled_linear")
    W = ScalarField(lambda x: 0.5 * x[0] ** 2)
    cert = Certificate("thm1", V=W, W=W, rho=ComparisonFn.linear(2.0), a=ComparisonFn.quadratic(0.5))
    assert analytic_T(cert, sys_, 0.1, 1.0, N_sup=256) == pytest.approx(151.0, rel=1e-3)
