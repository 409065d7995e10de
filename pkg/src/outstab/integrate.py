"""Numerical integration of catalog systems.

ODEs use a Dormand-Prince 5(4) pair with PI step-size control.  When the
pair's built-in stiffness test fires repeatedly the remainder of the horizon
is handed to scipy's Radau IIA solver with the same tolerances.  Delay systems
use the method of steps with fixed-step classical RK4 and cubic Hermite
reconstruction of the past.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowUpError, InputError, IntegrationError
from .history import History, NodeTable, hermite_eval
from .systems import DelaySystem, OdeSystem, as_state

__all__ = ["IntegratorConfig", "Trajectory", "integrate", "integrate_ode", "integrate_dde", "dense_eval"]

BLOWUP_NORM = 1e12


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    t_f: float = 10.0
    dde_step: float = 0.02
    max_steps: int = 2_000_000
    stiff_switch: bool = True

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InputError("tolerances must be positive")
        if not self.t_f > 0:
            raise InputError(f"t_f must be positive, got {self.t_f}")
        if not (self.max_step > 0 and self.dde_step > 0):
            raise InputError("step sizes must be positive")

    def with_tf(self, t_f: float) -> "IntegratorConfig":
        return IntegratorConfig(self.rel_tol, self.abs_tol, self.max_step, float(t_f),
                                self.dde_step, self.max_steps, self.stiff_switch)

    def as_dict(self) -> dict[str, Any]:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_step": None if math.isinf(self.max_step) else self.max_step,
            "t_f": self.t_f,
            "dde_step": self.dde_step,
            "stiff_switch": self.stiff_switch,
        }


@dataclass(eq=False)
class Trajectory:
    """Knot values of a numerical solution plus its cubic Hermite interpolant.

    For delay systems ``knot_t``/``knot_x``/``knot_dx`` also cover the initial
    history on ``[-r, 0]`` (with a doubled knot at 0 carrying the slope jump);
    ``times``/``states`` only hold the solution part.
    """

    system: Any
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    knot_t: np.ndarray
    knot_x: np.ndarray
    knot_dx: np.ndarray
    domain_violations: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _table: Any = field(default=None, repr=False)

    @property
    def t_f(self) -> float:
        return float(self.times[-1])

    @property
    def is_delay(self) -> bool:
        return bool(getattr(self.system, "is_delay", False))

    @property
    def x0(self):
        return self.history_at(0.0) if self.is_delay else self.states[0]

    def dense(self, t):
        return hermite_eval(self.knot_t, self.knot_x, self.knot_dx, t)

    def history_at(self, t: float) -> History:
        if not self.is_delay:
            raise InputError("history_at is only defined for delay trajectories")
        if t < -1e-12 or t > self.t_f + 1e-12:
            raise InputError(f"t={t} outside [0, {self.t_f}]")
        if self._table is None:
            self._table = NodeTable(self.knot_t, self.knot_x, self.knot_dx)
        return History(self.system.r, self.knot_t, self.knot_x, self.knot_dx, t_end=float(t),
                       table=self._table)

    def state_at(self, t: float):
        """The system state at ``t``: a vector for ODEs, a window for delays."""
        return self.history_at(t) if self.is_delay else self.dense(t)

    def output_at(self, t: float) -> np.ndarray:
        return np.asarray(self.system.output(self.state_at(t)), dtype=float)

    def output_norms(self) -> np.ndarray:
        return np.linalg.norm(self.outputs, axis=1)


def dense_eval(traj: Trajectory, t: float) -> np.ndarray:
    """Cubic Hermite state at ``t`` in ``[0, t_f]``; exact at knots."""
    if not (0.0 <= t <= traj.t_f):
        raise InputError(f"t={t} outside [0, {traj.t_f}]")
    return traj.dense(t)


def integrate(sys, x0, cfg: IntegratorConfig | None = None) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    if sys.is_delay:
        return integrate_dde(sys, x0, cfg)
    return integrate_ode(sys, x0, cfg)


# -- Dormand-Prince 5(4) ----------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFE, _FAC_MIN, _FAC_MAX, _BETA = 0.9, 0.2, 10.0, 0.04
_EXPO1 = 0.2 - 0.75 * _BETA
_STIFF_HLAMB, _STIFF_HITS, _STIFF_RESET = 3.25, 15, 6


def _initial_step(f, x0, f0, rtol, atol, hmax):
    scale = atol + rtol * np.abs(x0)
    d0 = np.sqrt(np.mean((x0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    x1 = x0 + h0 * f0
    d2 = np.sqrt(np.mean(((f(x1) - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, hmax)


def integrate_ode(sys: OdeSystem, x0, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate ``sys`` from ``x0`` over ``[0, cfg.t_f]``."""
    cfg = cfg or IntegratorConfig()
    x = as_state(x0, sys.n)
    if sys.in_domain is not None and not sys.in_domain(x):
        raise InputError(f"{sys.name}: initial state {x} is outside the domain")
    rtol, atol, t_f = cfg.rel_tol, cfg.abs_tol, cfg.t_f
    hmax = min(cfg.max_step, t_f)

    def f(v):
        return np.asarray(sys.field(v), dtype=float)

    ts = [0.0]
    xs = [x.copy()]
    fx = f(x)
    dxs = [fx]
    violations: list = []
    meta: dict[str, Any] = {"method": "dopri5", "rejected": 0, "stiff_switch_t": None}

    t = 0.0
    h = _initial_step(f, x, fx, rtol, atol, hmax)
    fac_old = 1e-4
    rejected_last = False
    n_steps = 0
    stiff_hits = nonstiff = 0
    k = [None] * 7
    k[0] = fx
    while t < t_f:
        if n_steps >= cfg.max_steps:
            raise IntegrationError(f"{sys.name}: exceeded {cfg.max_steps} steps", t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"{sys.name}: step size underflow (stiff?)", t)
        last = t + h >= t_f
        if last:
            h = t_f - t
        for i in range(1, 7):
            a = _A[i]
            acc = a[0] * k[0]
            for j in range(1, i):
                if a[j] != 0.0:
                    acc = acc + a[j] * k[j]
            xi = x + h * acc
            if i == 6:
                x_new = xi
            elif i == 5:
                x_stage6 = xi
            k[i] = f(xi)
        n_steps += 1
        err_vec = h * (_E[0] * k[0] + _E[2] * k[2] + _E[3] * k[3] + _E[4] * k[4]
                       + _E[5] * k[5] + _E[6] * k[6])
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if not math.isfinite(err):
            if not np.all(np.isfinite(x_new)) and h < 1e-10:
                raise BlowUpError(f"{sys.name}: non-finite state", t)
            err = 1e10
        fac11 = err ** _EXPO1 if err > 0 else 0.0
        if err <= 1.0:
            fac = fac11 / fac_old ** _BETA
            fac = min(1.0 / _FAC_MIN, max(1.0 / _FAC_MAX, fac / _SAFE))
            h_new = h / fac
            fac_old = max(err, 1e-4)
            t = t_f if last else t + h
            x = x_new
            if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > BLOWUP_NORM:
                raise BlowUpError(f"{sys.name}: |x| exceeded {BLOWUP_NORM:g}", t)
            ts.append(t)
            xs.append(x.copy())
            dxs.append(k[6])
            if sys.in_domain is not None and not sys.in_domain(x):
                violations.append((t, x.copy()))
            # stiffness test on the two stages sharing c = 1
            if cfg.stiff_switch:
                num = float(np.sum((k[6] - k[5]) ** 2))
                den = float(np.sum((x_new - x_stage6) ** 2))
                if den > 0 and h * math.sqrt(num / den) > _STIFF_HLAMB:
                    nonstiff = 0
                    stiff_hits += 1
                    if stiff_hits >= _STIFF_HITS and t < t_f:
                        meta["stiff_switch_t"] = t
                        meta["method"] = "dopri5+radau"
                        _continue_radau(sys, f, t, x, h_new, cfg, ts, xs, dxs, violations)
                        break
                else:
                    nonstiff += 1
                    if nonstiff >= _STIFF_RESET:
                        stiff_hits = 0
            k[0] = k[6]
            if rejected_last:
                h_new = min(h_new, h)
            rejected_last = False
            h = min(h_new, hmax)
        else:
            meta["rejected"] += 1
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            rejected_last = True
    meta["steps"] = n_steps
    return _finish_ode(sys, ts, xs, dxs, violations, meta)


def _continue_radau(sys, f, t0, x0, h0, cfg, ts, xs, dxs, violations):
    def rhs(_t, v):
        return f(v)

    def blowup(_t, v):
        return BLOWUP_NORM - float(np.linalg.norm(v))

    blowup.terminal = True
    sol = solve_ivp(rhs, (t0, cfg.t_f), x0, method="Radau", rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    first_step=min(h0, cfg.t_f - t0), max_step=cfg.max_step, events=blowup)
    if sol.status == 1:
        raise BlowUpError(f"{sys.name}: |x| exceeded {BLOWUP_NORM:g}", float(sol.t[-1]))
    if sol.status != 0:
        raise IntegrationError(f"{sys.name}: Radau failed: {sol.message}", float(sol.t[-1]))
    for t, v in zip(sol.t[1:], sol.y.T[1:]):
        if not np.all(np.isfinite(v)):
            raise BlowUpError(f"{sys.name}: non-finite state", float(t))
        ts.append(float(t))
        xs.append(v.copy())
        dxs.append(f(v))
        if sys.in_domain is not None and not sys.in_domain(v):
            violations.append((float(t), v.copy()))


def _finish_ode(sys, ts, xs, dxs, violations, meta) -> Trajectory:
    times = np.array(ts)
    states = np.array(xs)
    derivs = np.array(dxs)
    outputs = np.array([np.asarray(sys.output(s), dtype=float).reshape(-1) for s in states])
    return Trajectory(sys, times, states, outputs, times, states, derivs, violations, meta)


# -- method of steps --------------------------------------------------------

def integrate_dde(sys: DelaySystem, h0: History, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Method of steps with fixed-step RK4; ``cfg.dde_step`` must divide ``r``."""
    cfg = cfg or IntegratorConfig()
    r = sys.r
    if abs(h0.r - r) > 1e-12:
        raise InputError(f"history horizon {h0.r} differs from system delay {r}")
    if h0.n != sys.n:
        raise InputError(f"history dimension {h0.n} differs from system dimension {sys.n}")
    step = cfg.dde_step
    ratio = r / step
    if step > r or abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise InputError(f"dde_step={step} must divide the delay r={r}")
    if sys.in_domain is not None and not sys.in_domain(h0):
        raise InputError(f"{sys.name}: initial history is outside the domain")

    # initial-history knots shifted so that the window ends at t = 0
    bp = h0.breakpoints()
    hist_t = bp
    hist_x = np.atleast_2d(h0.query(bp))
    hist_dx = np.atleast_2d(h0.derivative(bp))
    hist_x[-1] = h0.current()

    n_steps = int(math.ceil(cfg.t_f / step - 1e-9))
    m0 = hist_t.size
    size = m0 + n_steps + 1
    T = np.empty(size)
    X = np.empty((size, sys.n))
    F = np.zeros((size, sys.n))
    T[:m0], X[:m0], F[:m0] = hist_t, hist_x, hist_dx
    # doubled knot at 0: left slope from the history, right slope from the field
    T[m0], X[m0] = 0.0, hist_x[-1]
    table = NodeTable(T, X, F)
    violations: list = []

    def field_at(i, head=None):
        hist = History(r, T[: i + 1], X[: i + 1], F[: i + 1], head=head)
        return np.asarray(sys.field(hist), dtype=float)

    i = m0
    F[i] = F[i - 1]
    F[i] = field_at(i)
    t = 0.0
    for n in range(n_steps):
        t_next = min((n + 1) * step, cfg.t_f)
        h = t_next - t
        xn = X[i]
        k1 = F[i]
        k2 = field_at(i, head=(t + 0.5 * h, xn + 0.5 * h * k1))
        k3 = field_at(i, head=(t + 0.5 * h, xn + 0.5 * h * k2))
        k4 = field_at(i, head=(t_next, xn + h * k3))
        x_next = xn + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_next)) or float(np.linalg.norm(x_next)) > BLOWUP_NORM:
            raise BlowUpError(f"{sys.name}: |x| exceeded {BLOWUP_NORM:g}", t_next)
        i += 1
        T[i], X[i], F[i] = t_next, x_next, k4
        # knot slope is the field at the new knot (k4 is only a placeholder)
        F[i] = field_at(i)
        t = t_next
        if sys.in_domain is not None and not sys.in_domain(
                History(r, T[: i + 1], X[: i + 1], F[: i + 1], table=table)):
            violations.append((t, x_next.copy()))

    knot_t, knot_x, knot_dx = T[: i + 1], X[: i + 1], F[: i + 1]
    times = knot_t[m0:]
    states = knot_x[m0:]
    traj = Trajectory(sys, times, states, np.empty((0, sys.k)), knot_t, knot_x, knot_dx,
                      violations, {"method": "steps-rk4", "dde_step": step})
    traj._table = table
    traj.outputs = np.array([np.asarray(sys.output(traj.history_at(tt)), dtype=float).reshape(-1)
                             for tt in times])
    return traj
