"""Executable systems (finite-dimensional and delay) and the built-in catalog."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.stats import qmc

from .errors import DomainTooThinError, InfeasibleError, InputError, NumericError
from .history import History

__all__ = [
    "OdeSystem",
    "DelaySystem",
    "History",
    "as_state",
    "eval_field",
    "builtin",
    "list_systems",
    "sample_domain",
    "parse_g",
    "example2_functionals",
    "weighted_square",
]


def as_state(x, n: int) -> np.ndarray:
    """Validate and copy a state vector of length ``n``."""
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size != n:
        raise InputError(f"state has length {arr.size}, system dimension is {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"state has non-finite entries: {arr}")
    return arr


@dataclass(frozen=True, eq=False)
class OdeSystem:
    """Autonomous ODE ``x' = field(x)`` with output ``y = output(x)``.

    ``in_domain`` is the membership predicate of a positively invariant set;
    ``None`` means the whole space.
    """

    name: str
    n: int
    k: int
    field: Callable[[np.ndarray], np.ndarray]
    output: Callable[[np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], bool] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    info: Mapping[str, Any] = field(default_factory=dict)

    is_delay = False

    def zero(self) -> np.ndarray:
        return np.zeros(self.n)

    def norm(self, x) -> float:
        return float(np.linalg.norm(x))


@dataclass(frozen=True, eq=False)
class DelaySystem:
    """Retarded system ``x'(t) = field(x_t)`` with output ``y = output(x_t)``.

    ``field``, ``output`` and ``in_domain`` all take a :class:`History`.
    """

    name: str
    n: int
    k: int
    r: float
    field: Callable[[History], np.ndarray]
    output: Callable[[History], np.ndarray]
    in_domain: Callable[[History], bool] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    info: Mapping[str, Any] = field(default_factory=dict)

    is_delay = True

    def __post_init__(self):
        if not self.r > 0:
            raise InputError(f"delay horizon r must be positive, got {self.r}")

    def zero(self) -> History:
        return History.zero(self.r, self.n)

    def norm(self, x: History) -> float:
        return x.sup_norm()


def eval_field(sys: OdeSystem, x) -> np.ndarray:
    """Return ``f(x)`` after checking dimension and finiteness."""
    x = as_state(x, sys.n)
    fx = np.asarray(sys.field(x), dtype=float).reshape(-1)
    if fx.size != sys.n:
        raise InputError(f"{sys.name}: field returned length {fx.size}, expected {sys.n}")
    bad = np.flatnonzero(~np.isfinite(fx))
    if bad.size:
        raise NumericError(f"{sys.name}: field coordinate {bad[0] + 1} is non-finite at x={x}")
    return fx


# -- bounded nonlinearity ---------------------------------------------------

def parse_g(spec: str | None) -> tuple[Callable[[float, float], float], float, str]:
    """Parse ``sin``, ``tanh`` or ``const:<c>`` into ``(g, sup|g|, label)``.

    ``sin`` is ``sin(a*b)``, ``tanh`` is ``tanh(a+b)``.
    """
    spec = "sin" if spec is None else spec.strip()
    if spec == "sin":
        return (lambda a, b: math.sin(a * b)), 1.0, "sin"
    if spec == "tanh":
        return (lambda a, b: math.tanh(a + b)), 1.0, "tanh"
    if spec.startswith("const:"):
        try:
            c = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise InputError(f"bad constant in g spec {spec!r}") from exc
        return (lambda a, b: c), abs(c), spec
    raise InputError(f"unknown g spec {spec!r}; use sin, tanh or const:<c>")


# -- catalog ----------------------------------------------------------------

def _decoupled_linear(params):
    return OdeSystem(
        name="decoupled_linear",
        n=1,
        k=1,
        field=lambda x: -x,
        output=lambda x: x[:1].copy(),
        params=dict(params),
    )


def _example1(params, g_spec):
    g, bound, label = parse_g(g_spec)

    def f(x):
        y, z, w = x
        gz = g(z, w)
        return np.array([
            -(1.0 + w * w) * y + 2.0 * z * gz / (1.0 + z * z) ** 2,
            -gz * y,
            w + abs(y),
        ])

    return OdeSystem(
        name="example1",
        n=3,
        k=1,
        field=f,
        output=lambda x: x[:1].copy(),
        params=dict(params),
        info={"g": label, "g_bound": bound, "g_fn": g},
    )


def _spike_demo(params):
    # chirp generator: y1 = cos(e^t - 1) from (1, 0, 1); upward swings get arbitrarily fast
    def f(x):
        y1, y2, w = x
        return np.array([w * y2, -w * y1, w])

    return OdeSystem(
        name="spike_demo",
        n=3,
        k=1,
        field=f,
        output=lambda x: x[:1].copy(),
        params=dict(params),
    )


@functools.lru_cache(maxsize=64)
def weighted_square(sigma: float):
    """Integrand ``e^{sigma s} x1(s)^2``; one object per sigma so that
    :meth:`History.quad` can memoise it."""
    def fn(s, X):
        return np.exp(sigma * s) * X[:, 0] ** 2
    return fn


def example2_functionals(p: float, q: float, Q: float, sigma: float, r: float):
    """Return ``(V, W, lam, K)`` for the scalar-delay example.

    ``V`` and ``W`` are the exponentially weighted Krasovskii functionals on
    histories; ``lam`` and ``K`` are the derived constants.
    """
    lam = q * q * math.exp(sigma * r) / (4.0 * Q)
    K = sigma * Q / (2.0 * (p - Q - lam))

    integrand = weighted_square(float(sigma))

    def weighted(h: History) -> float:
        return h.quad(integrand)

    def V(h: History) -> float:
        x0 = h.current()
        return 0.5 * x0[0] ** 2 + Q * weighted(h) + 0.5 * x0[1] ** 2

    def W(h: History) -> float:
        x0 = h.current()
        return 0.5 * x0[0] ** 2 + K * weighted(h)

    return V, W, lam, K


def _disk_points(R: float, n_points: int = 10_000, seed: int = 0) -> np.ndarray:
    sob = qmc.Sobol(d=2, scramble=True, seed=seed)
    pts = (2.0 * sob.random(2 ** 14) - 1.0) * R
    pts = pts[np.einsum("ij,ij->i", pts, pts) <= R * R][:n_points]
    ang = np.linspace(0.0, 2 * np.pi, 256, endpoint=False)
    rim = R * np.column_stack([np.cos(ang), np.sin(ang)])
    return np.vstack([pts, rim])


def _example2(params, g_spec, check_feasibility=True):
    p, q, Q = params["p"], params["q"], params["Q"]
    sigma, r, R = params["sigma"], params["r"], params["R"]
    if min(p, Q, sigma, r, R) <= 0:
        raise InputError("example2 requires p, Q, sigma, r, R > 0")
    g, bound, label = parse_g(g_spec)
    lam = q * q * math.exp(sigma * r) / (4.0 * Q)
    feas: dict[str, Any] = {"lambda": lam, "p_minus_Q": p - Q}
    if not lam < p - Q:
        err = InfeasibleError(
            "lambda_below_p_minus_Q",
            f"lambda = q^2 exp(sigma r)/(4Q) = {lam:.6g} must be < p - Q = {p - Q:.6g}",
        )
        if check_feasibility:
            raise err
        feas.update(feasible=False, violated=err.condition)
        K = float("nan")
        gain_lhs = float("nan")
    else:
        D = p - Q - lam
        K = sigma * Q / (2.0 * D)
        gain_lhs = (4.0 * lam * D * D + sigma * sigma * Q) / (2.0 * sigma * D)
        pts = _disk_points(R)
        rhs = np.array([p + g(a, b) * b for a, b in pts])
        j = int(np.argmin(rhs))
        feas.update(
            K=K,
            gain_lhs=gain_lhs,
            gain_rhs_min=float(rhs[j]),
            gain_rhs_lower_bound=p - bound * R,
            gain_margin=float(rhs[j] - gain_lhs),
            gain_witness=pts[j].tolist(),
            gain_samples=int(len(pts)),
            feasible=bool(rhs[j] >= gain_lhs),
        )
        if rhs[j] < gain_lhs:
            err = InfeasibleError(
                "disk_gain_condition",
                f"p + g(x) x2 = {rhs[j]:.6g} < {gain_lhs:.6g} at x={pts[j].tolist()} with |x| <= R={R}",
            )
            if check_feasibility:
                raise err
            feas["violated"] = err.condition

    V, W, _, _ = example2_functionals(p, q, Q, sigma, r) if lam < p - Q else (None, None, None, None)

    def f(h: History) -> np.ndarray:
        x1, x2 = h.current()
        x1d = h.query(-r)[0]
        gx = g(x1, x2)
        return np.array([-p * x1 + q * x1d - gx * x1 * x2, gx * x1 * x1])

    def in_domain(h: History) -> bool:
        return V(h) <= 0.5 * R * R

    return DelaySystem(
        name="example2",
        n=2,
        k=1,
        r=r,
        field=f,
        output=lambda h: h.current()[:1],
        in_domain=in_domain if V is not None else None,
        params=dict(params),
        info={"g": label, "g_bound": bound, "g_fn": g, "feasibility": feas, "V": V, "W": W},
    )


_DEFAULTS: dict[str, dict[str, float]] = {
    "decoupled_linear": {},
    "example1": {},
    "example2": {"p": 2.0, "q": 0.1, "Q": 0.5, "sigma": 1.0, "r": 1.0, "R": 1.0},
    "adaptive_basic": {"gamma": 1.0, "theta": 1.0},
    "adaptive_redesigned": {"gamma": 1.0, "L": 2.0, "theta": 1.0},
    "spike_demo": {},
}

_DESCRIPTIONS = {
    "decoupled_linear": "y' = -y, h = y (closed-form oracle)",
    "example1": "3-d system with unbounded solutions, AOS via the relaxed Barbalat route; g selectable",
    "example2": "2-d retarded system with one discrete delay r; constructor checks feasibility",
    "adaptive_basic": "scalar demo plant y' = u + theta*y under the classical adaptive law, coords (y, z)",
    "adaptive_redesigned": "scalar demo plant under the redesigned law with gain L; domain is the V <= gamma*L set",
    "spike_demo": "chirp generator y1' = w y2, y2' = -w y1, w' = w; output y1",
}


def list_systems() -> list[dict[str, Any]]:
    return [
        {"name": name, "description": _DESCRIPTIONS[name], "defaults": dict(_DEFAULTS[name])}
        for name in _DEFAULTS
    ]


def builtin(name: str, params: Mapping[str, float] | None = None, g: str | None = None,
            check_feasibility: bool = True):
    """Build a catalog system by name, overriding default parameters."""
    if name not in _DEFAULTS:
        raise InputError(f"unknown system {name!r}; known: {', '.join(_DEFAULTS)}")
    merged = dict(_DEFAULTS[name])
    for key, val in (params or {}).items():
        if key not in merged:
            raise InputError(f"system {name!r} has no parameter {key!r}; known: {sorted(merged)}")
        merged[key] = float(val)
    if name == "decoupled_linear":
        return _decoupled_linear(merged)
    if name == "example1":
        return _example1(merged, g)
    if name == "example2":
        return _example2(merged, g, check_feasibility)
    if name == "spike_demo":
        return _spike_demo(merged)
    from . import adaptive

    plant = adaptive.scalar_demo_plant()
    if name == "adaptive_basic":
        cfg = adaptive.AdaptiveConfig(gamma=merged["gamma"], L=0.0, theta=[merged["theta"]])
    else:
        cfg = adaptive.AdaptiveConfig(gamma=merged["gamma"], L=merged["L"], theta=[merged["theta"]])
    return adaptive.closed_loop(plant, cfg, name=name)


# -- sampling ---------------------------------------------------------------

_MAX_DRAWS = 1_000_000


def sample_domain(sys, R: float, N: int, seed: int):
    """Draw ``N`` initial conditions from ``B_R`` intersected with the domain.

    ODE states are uniform in the open ball (rejection on ``in_domain``).
    Delay states cycle through constant, linear and cubic histories with
    coefficients uniform in [-1, 1], scaled to a uniform sup-norm radius below
    ``R`` and shrunk by 0.9 until ``in_domain`` holds.
    """
    if not R > 0:
        raise InputError(f"radius must be positive, got {R}")
    if N < 1:
        raise InputError(f"sample count must be >= 1, got {N}")
    rng = np.random.default_rng(seed)
    if sys.is_delay:
        return [_sample_history(sys, R, rng, i) for i in range(N)]

    out: list[np.ndarray] = []
    draws = 0
    batch = max(4 * N, 1024)
    while len(out) < N:
        d = rng.standard_normal((batch, sys.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = R * rng.random(batch) ** (1.0 / sys.n)
        pts = d * rad[:, None]
        for x in pts:
            draws += 1
            if sys.in_domain is None or sys.in_domain(x):
                out.append(x)
                if len(out) == N:
                    break
        if len(out) < N and draws >= _MAX_DRAWS and len(out) < 1e-3 * draws:
            raise DomainTooThinError(
                f"domain too thin in B_R: accepted {len(out)} of {draws} draws (R={R})")
    return out


def polynomial_history(r: float, coeffs: np.ndarray) -> History:
    """History ``x(s) = sum_j coeffs[j] * (s/r)**j`` (degree <= 3, exact)."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    deg = coeffs.shape[0] - 1

    def fn(s):
        u = s / r
        return sum(coeffs[j] * u ** j for j in range(deg + 1))

    def dfn(s):
        u = s / r
        return sum(j * coeffs[j] * u ** (j - 1) for j in range(1, deg + 1)) / r if deg else 0 * coeffs[0]

    return History.from_function(r, fn, dfn, n_seg=8)


def _sample_history(sys: DelaySystem, R: float, rng: np.random.Generator, i: int) -> History:
    deg = (0, 1, 3)[i % 3]
    for _ in range(1000):
        coeffs = rng.uniform(-1.0, 1.0, size=(deg + 1, sys.n))
        base = polynomial_history(sys.r, coeffs)
        sup = base.sup_norm()
        if sup > 1e-12:
            break
    target = R * rng.random()
    return shrink_into_domain(sys, base.scaled(target / sup))


def shrink_into_domain(sys, h: History, factor: float = 0.9, max_iter: int = 500) -> History:
    if sys.in_domain is None:
        return h
    for _ in range(max_iter):
        if sys.in_domain(h):
            return h
        h = h.scaled(factor)
    raise DomainTooThinError("could not shrink history into the domain")
