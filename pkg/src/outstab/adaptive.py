"""Adaptive control of matched-uncertainty plants.

Plant: ``y' = f(y) + g(y) u + g(y) phi(y)^T theta`` with a known stabilising
feedback ``k`` and Lyapunov pair ``(P, Q)``.  Two adaptive laws are provided:
the classical certainty-equivalence law and a redesigned law with an extra
damping term ``-L mu(y) dP(y) g(y)``.  The closed loop is written in
``x = (y, z)`` with ``z = theta_hat - theta``; it does not depend on theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .certificates import (Certificate, ComparisonFn, ConditionResult, ScalarField, Tolerance,
                           _Collector)
from .errors import InputError
from .integrate import IntegratorConfig, integrate
from .systems import OdeSystem

__all__ = [
    "AdaptivePlant",
    "AdaptiveConfig",
    "scalar_demo_plant",
    "check_assumptions",
    "control_basic",
    "control_redesigned",
    "closed_loop",
    "omega_member",
    "initial_state",
    "thm3_certificate",
    "p_decay_check",
    "nonuniformity_demo",
]


@dataclass(frozen=True)
class AdaptivePlant:
    """Matched-uncertainty plant with its nominal design data.

    ``g`` maps to an n-vector (single input), ``phi`` to a p-vector, ``k`` and
    ``mu`` to scalars.  ``rho`` and ``a`` are comparison functions with
    ``Q(y) >= rho(P(y))`` and ``a(|y|) <= P(y)``.
    """

    n: int
    p: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    P: Callable[[np.ndarray], float]
    gradP: Callable[[np.ndarray], np.ndarray]
    Q: Callable[[np.ndarray], float]
    k: Callable[[np.ndarray], float]
    mu: Callable[[np.ndarray], float]
    rho: ComparisonFn | None = None
    a: ComparisonFn | None = None
    name: str = "plant"

    def dPg(self, y: np.ndarray) -> float:
        return float(np.dot(self.gradP(y), self.g(y)))


@dataclass(frozen=True)
class AdaptiveConfig:
    gamma: float = 1.0
    L: float = 0.0
    theta: tuple = (0.0,)
    theta_hat0: tuple | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError(f"adaptation gain gamma must be positive, got {self.gamma}")
        if not self.L >= 0:
            raise InputError(f"gain L must be >= 0, got {self.L}")
        object.__setattr__(self, "theta", tuple(float(v) for v in np.atleast_1d(self.theta)))
        if self.theta_hat0 is not None:
            object.__setattr__(self, "theta_hat0",
                               tuple(float(v) for v in np.atleast_1d(self.theta_hat0)))

    @property
    def scheme(self) -> str:
        return "redesigned" if self.L > 0 else "basic"


def scalar_demo_plant() -> AdaptivePlant:
    """``y' = u + theta*y`` with ``k = -y``, ``P = y^2/2``, ``Q = y^2``, ``mu = 1``."""
    return AdaptivePlant(
        n=1,
        p=1,
        f=lambda y: np.zeros(1),
        g=lambda y: np.ones(1),
        phi=lambda y: np.array([y[0]]),
        P=lambda y: 0.5 * y[0] * y[0],
        gradP=lambda y: np.array([y[0]]),
        Q=lambda y: y[0] * y[0],
        k=lambda y: -y[0],
        mu=lambda y: 1.0,
        rho=ComparisonFn.linear(2.0),
        a=ComparisonFn.quadratic(0.5),
        name="scalar_demo",
    )


def _test_grid(n: int, half_width: float = 5.0, m: int = 4096, seed: int = 0) -> np.ndarray:
    if n == 1:
        return np.linspace(-half_width, half_width, 2001)[:, None]
    pts = (2.0 * qmc.Sobol(d=n, scramble=True, seed=seed).random(m) - 1.0) * half_width
    return np.vstack([np.zeros(n), pts])


def check_assumptions(plant: AdaptivePlant, grid: np.ndarray | None = None,
                      tol: float = 0.0) -> dict[str, ConditionResult]:
    """Sampled check of the Lyapunov inequality for the nominal feedback and
    of the regressor bound ``|phi|^2 <= mu Q`` on a test grid."""
    ys = _test_grid(plant.n) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    tolerance = Tolerance(abs=tol, rel=0.0)
    nominal = _Collector("nominal_decay", tolerance)
    matched = _Collector("regressor_bound", tolerance)
    for y in ys:
        dP = plant.gradP(y)
        lhs = float(np.dot(dP, plant.f(y)) + np.dot(dP, plant.g(y)) * plant.k(y))
        nominal.add(lhs, -plant.Q(y), None, y)
        ph = np.asarray(plant.phi(y), dtype=float)
        matched.add(float(np.dot(ph, ph)), plant.mu(y) * plant.Q(y), None, y)
    return {"nominal_decay": nominal.result(), "regressor_bound": matched.result()}


def _split(plant: AdaptivePlant, x):
    x = np.asarray(x, dtype=float)
    return x[: plant.n], x[plant.n:]


def control_basic(plant: AdaptivePlant, cfg: AdaptiveConfig, y, theta_hat):
    """Certainty-equivalence law; returns ``(u, d theta_hat / dt)``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    th = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    ph = np.asarray(plant.phi(y), dtype=float)
    u = plant.k(y) - float(np.dot(ph, th))
    return float(u), plant.dPg(y) * ph / cfg.gamma


def control_redesigned(plant: AdaptivePlant, cfg: AdaptiveConfig, y, theta_hat):
    """Law with additional damping ``-L mu(y) dP(y) g(y)``."""
    if not cfg.L > 0:
        raise InputError("the redesigned law needs L > 0")
    u, th_dot = control_basic(plant, cfg, y, theta_hat)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return u - cfg.L * plant.mu(y) * plant.dPg(y), th_dot


def _closed_loop_field(plant: AdaptivePlant, cfg: AdaptiveConfig):
    gamma, L = cfg.gamma, cfg.L

    def field(x):
        y, z = _split(plant, x)
        ph = np.asarray(plant.phi(y), dtype=float)
        gy = np.asarray(plant.g(y), dtype=float)
        dPg = float(np.dot(plant.gradP(y), gy))
        inner = plant.k(y) - float(np.dot(ph, z))
        if L > 0:
            inner -= L * plant.mu(y) * dPg
        ydot = np.asarray(plant.f(y), dtype=float) + gy * inner
        zdot = dPg * ph / gamma
        return np.concatenate([ydot, zdot])

    return field


def composite_V(plant: AdaptivePlant, cfg: AdaptiveConfig):
    def V(x):
        y, z = _split(plant, x)
        return plant.P(y) + 0.5 * cfg.gamma * float(np.dot(z, z))

    return V


def omega_member(plant: AdaptivePlant, cfg: AdaptiveConfig, x) -> bool:
    """``P(y) + gamma/2 |z|^2 <= gamma L``."""
    if not cfg.L > 0:
        raise InputError("the invariant region is defined for L > 0 only")
    return bool(composite_V(plant, cfg)(x) <= cfg.gamma * cfg.L)


def closed_loop(plant: AdaptivePlant, cfg: AdaptiveConfig, name: str | None = None) -> OdeSystem:
    """Closed loop in ``(y, z)`` coordinates; the domain is the invariant
    sublevel set when ``L > 0`` and the whole space otherwise."""
    n = plant.n
    in_domain = (lambda x: omega_member(plant, cfg, x)) if cfg.L > 0 else None
    return OdeSystem(
        name=name or f"{plant.name}_{cfg.scheme}",
        n=n + plant.p,
        k=n,
        field=_closed_loop_field(plant, cfg),
        output=lambda x: np.asarray(x[:n], dtype=float).copy(),
        in_domain=in_domain,
        params={"gamma": cfg.gamma, "L": cfg.L, "theta": cfg.theta[0] if len(cfg.theta) == 1 else 0.0},
        info={"plant": plant, "config": cfg, "V": composite_V(plant, cfg)},
    )


def initial_state(plant: AdaptivePlant, cfg: AdaptiveConfig, y0, theta_hat0=None) -> np.ndarray:
    """``(y0, theta_hat0 - theta)``; ``theta_hat0`` defaults to ``cfg.theta_hat0`` or 0."""
    th0 = theta_hat0 if theta_hat0 is not None else cfg.theta_hat0
    th0 = np.zeros(plant.p) if th0 is None else np.atleast_1d(np.asarray(th0, dtype=float))
    return np.concatenate([np.atleast_1d(np.asarray(y0, dtype=float)), th0 - np.asarray(cfg.theta)])


def thm3_certificate(plant: AdaptivePlant, cfg: AdaptiveConfig) -> Certificate:
    """``V = P + gamma/2 |z|^2``, ``W = P`` with the plant's ``rho`` and ``a``."""
    if not cfg.L > 0:
        raise InputError("no uniform certificate for the basic law (L = 0); use L > 0")
    if plant.rho is None or plant.a is None:
        raise InputError(f"plant {plant.name} does not supply rho and a in closed form")
    field = _closed_loop_field(plant, cfg)
    V = composite_V(plant, cfg)

    def dV(x):
        y, z = _split(plant, x)
        fx = field(x)
        return float(np.dot(plant.gradP(y), fx[: plant.n]) + cfg.gamma * np.dot(z, fx[plant.n:]))

    def dW(x):
        y, _ = _split(plant, x)
        return float(np.dot(plant.gradP(y), field(x)[: plant.n]))

    return Certificate(
        target="thm1",
        V=ScalarField(V, dV, name="P + gamma/2 |z|^2"),
        W=ScalarField(lambda x: plant.P(_split(plant, x)[0]), dW, name="P"),
        rho=plant.rho,
        a=plant.a,
        name="adaptive-thm3",
    )


def p_decay_check(plant: AdaptivePlant, cfg: AdaptiveConfig, trajs, tol: Tolerance | None = None,
                  states: Sequence = ()) -> ConditionResult:
    """``dP/dt <= -Q(y)/2`` at every trajectory knot (and extra state) in the region."""
    cert = thm3_certificate(plant, cfg)
    col = _Collector("p_decay", tol or Tolerance())
    for x in states:
        if omega_member(plant, cfg, x):
            y, _ = _split(plant, x)
            col.add(cert.W.closed_form_derivative(x), -0.5 * plant.Q(y), None, x)
    for tr in trajs:
        for t, x in zip(tr.times, tr.states):
            if omega_member(plant, cfg, x):
                y, _ = _split(plant, x)
                col.add(cert.W.closed_form_derivative(x), -0.5 * plant.Q(y), float(t), x)
    return col.result()


def nonuniformity_demo(plant: AdaptivePlant | None = None, gamma: float = 1.0, theta: float = 1.0,
                       y0s: Sequence[float] = (0.5,), z0s: Sequence[float] = (-2.0, -4.0, -6.0, -8.0),
                       eps: float = 0.1, t_f: float = 40.0, L: float = 0.0) -> dict:
    """Empirical convergence times of the closed loop over a grid of ``(y0, z0)``.

    Returns the table and whether the times are strictly increasing along the
    listed order (``y0s`` outer loop, ``z0s`` inner loop).
    """
    from .convergence import empirical_conv_time

    plant = plant or scalar_demo_plant()
    cfg = AdaptiveConfig(gamma=gamma, L=L, theta=(theta,))
    sys = closed_loop(plant, cfg)
    icfg = IntegratorConfig(t_f=t_f)
    rows = []
    for y0 in y0s:
        for z0 in z0s:
            x0 = np.array([y0, z0], dtype=float)
            traj = integrate(sys, x0, icfg)
            rows.append({"y0": float(y0), "z0": float(z0), "T_emp": empirical_conv_time(traj, eps)})
    times = [r["T_emp"] for r in rows]
    increasing = all(b > a for a, b in zip(times, times[1:])) and all(math.isfinite(t) for t in times)
    return {"scheme": cfg.scheme, "gamma": gamma, "L": L, "eps": eps, "t_f": t_f, "rows": rows,
            "strictly_increasing": bool(increasing)}
