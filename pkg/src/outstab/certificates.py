"""Lyapunov-type certificates and sampled checks of their hypotheses.

A :class:`Certificate` bundles scalar fields ``V``, ``W`` and comparison
functions ``rho``, ``a``, ``b``, ``gamma``, ``zeta``.  The ``check_*``
functions evaluate every required inequality at sampled states and along
trajectories and return a :class:`CheckReport` with signed margins
(``rhs - lhs``; negative means violated).

Derivatives along solutions use the certificate's closed form when one is
attached and a forward-difference Dini estimate otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InputError, NumericError
from .integrate import IntegratorConfig, Trajectory, integrate
from .systems import sample_domain

__all__ = [
    "ComparisonFn",
    "ScalarField",
    "Certificate",
    "Tolerance",
    "ConditionResult",
    "CheckReport",
    "dini_derivative",
    "inverse_comparison",
    "check",
    "check_thm1",
    "check_thm2",
    "check_prop1",
    "check_cor1",
    "check_cor2",
    "DEFAULT_H_LIST",
]

DEFAULT_H_LIST = (1e-3, 1e-4, 1e-5)
_TEST_GRID = np.geomspace(1e-6, 1e6, 121)


# -- comparison functions ---------------------------------------------------

@dataclass(frozen=True)
class ComparisonFn:
    """Scalar comparison function ``[0, inf) -> [0, inf)``.

    kinds: ``linear`` c*s, ``quadratic`` c*s^2, ``power`` c*s^p,
    ``affine_capped`` min(c*s, cap), ``constant`` c (for growth bounds),
    ``custom`` wrapping an arbitrary callable.
    """

    kind: str
    c: float = 1.0
    p: float = 1.0
    cap: float = math.inf
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    monotone: bool = True
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic", "power", "affine_capped", "constant", "custom"):
            raise InputError(f"unknown comparison kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise InputError("custom comparison function needs fn")
        if self.kind != "constant" and self.kind != "custom" and not self.c > 0:
            raise InputError(f"comparison coefficient must be positive, got {self.c}")
        if self.kind == "power" and not self.p > 0:
            raise InputError(f"power exponent must be positive, got {self.p}")

    @classmethod
    def linear(cls, c: float) -> "ComparisonFn":
        return cls("linear", c=c)

    @classmethod
    def quadratic(cls, c: float) -> "ComparisonFn":
        return cls("quadratic", c=c)

    @classmethod
    def power(cls, c: float, p: float) -> "ComparisonFn":
        return cls("power", c=c, p=p)

    @classmethod
    def capped(cls, c: float, cap: float) -> "ComparisonFn":
        return cls("affine_capped", c=c, cap=cap)

    @classmethod
    def constant(cls, c: float) -> "ComparisonFn":
        if c < 0:
            raise InputError(f"constant bound must be >= 0, got {c}")
        return cls("constant", c=c)

    @classmethod
    def custom(cls, fn, monotone: bool = False, label: str = "custom") -> "ComparisonFn":
        return cls("custom", fn=fn, monotone=monotone, label=label)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k == "linear":
            out = self.c * s
        elif k == "quadratic":
            out = self.c * s * s
        elif k == "power":
            out = self.c * np.power(s, self.p)
        elif k == "affine_capped":
            out = np.minimum(self.c * s, self.cap)
        elif k == "constant":
            out = np.full_like(s, self.c)
        else:
            out = np.asarray(self.fn(s), dtype=float)
        return float(out) if out.ndim == 0 else out

    def is_class_kinf(self, grid: np.ndarray = _TEST_GRID) -> bool:
        """Zero at zero and strictly increasing on the geometric test grid
        (the top of the grid stands in for unboundedness)."""
        vals = np.asarray(self(grid))
        return bool(self(0.0) == 0.0 and np.all(np.diff(vals) > 0) and vals[0] > 0)

    def is_positive_definite(self, grid: np.ndarray = _TEST_GRID) -> bool:
        return bool(self(0.0) == 0.0 and np.all(np.asarray(self(grid)) > 0))

    def describe(self) -> str:
        k = self.kind
        if k == "linear":
            return f"{self.c:g}*s"
        if k == "quadratic":
            return f"{self.c:g}*s^2"
        if k == "power":
            return f"{self.c:g}*s^{self.p:g}"
        if k == "affine_capped":
            return f"min({self.c:g}*s, {self.cap:g})"
        if k == "constant":
            return f"{self.c:g}"
        return self.label


def inverse_comparison(a: ComparisonFn, v: float) -> float:
    """Solve ``a(s) = v`` for ``s >= 0`` by bisection (``a`` increasing)."""
    if v < 0:
        raise InputError(f"inverse_comparison needs v >= 0, got {v}")
    if v == 0:
        return 0.0
    tol = 1e-12 * max(1.0, v)
    hi = 1.0
    while a(hi) < v:
        hi *= 2.0
        if hi > 1e18:
            raise NumericError(f"no bracket for a(s) = {v} below s = 1e18")
    lo = 0.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        val = a(mid)
        if abs(val - v) <= tol:
            return mid
        if val < v:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.spacing(hi):
            break
    return 0.5 * (lo + hi)


# -- certificates -----------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """A scalar function of the state with an optional closed-form derivative
    along the solutions of the system it was written for."""

    eval: Callable[[Any], float]
    closed_form_derivative: Callable[[Any], float] | None = None
    requires_zero: bool = True
    name: str = ""

    def __call__(self, x) -> float:
        return float(self.eval(x))


TARGETS = ("thm1", "thm2", "prop1", "cor1", "cor2")
_REQUIRED = {
    "thm1": ("V", "W", "rho", "a"),
    "cor1": ("V", "W", "rho", "a"),
    "thm2": ("V", "W", "rho", "a", "b", "gamma"),
    "cor2": ("V", "W", "rho", "a", "b", "gamma"),
    "prop1": ("W", "a", "b"),
}


@dataclass(frozen=True)
class Certificate:
    """Functions witnessing one theorem's hypotheses.

    ``which_side`` selects the growth bound on ``W`` used by ``thm2``/``cor2``:
    ``"upper"`` means ``dW <= gamma(V)``, ``"lower"`` means ``dW >= -gamma(V)``.
    ``zeta`` (``W <= zeta(V)``) is required there unless ``rho.monotone``.
    """

    target: str
    W: ScalarField
    a: ComparisonFn
    V: ScalarField | None = None
    rho: ComparisonFn | None = None
    b: ComparisonFn | None = None
    gamma: ComparisonFn | None = None
    zeta: ComparisonFn | None = None
    which_side: str = "upper"
    name: str = ""

    def __post_init__(self):
        if self.target not in TARGETS:
            raise InputError(f"unknown target {self.target!r}; expected one of {TARGETS}")
        missing = [f for f in _REQUIRED[self.target] if getattr(self, f) is None]
        if self.target in ("thm2", "cor2"):
            if self.which_side not in ("upper", "lower"):
                raise InputError(f"which_side must be 'upper' or 'lower', got {self.which_side!r}")
            if self.rho is not None and not self.rho.monotone and self.zeta is None:
                missing.append("zeta")
        if missing:
            raise InputError(f"certificate for {self.target} is missing {', '.join(missing)}")


@dataclass(frozen=True)
class Tolerance:
    """A margin ``rhs - lhs`` passes iff it is ``>= -(abs + rel*|rhs|)``."""

    abs: float = 1e-6
    rel: float = 1e-4

    def allowance(self, rhs):
        return self.abs + self.rel * np.abs(rhs)


@dataclass
class ConditionResult:
    id: str
    verdict: bool
    margin: float
    witness_t: float | None
    witness_state: Any
    samples: int
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "verdict": "pass" if self.verdict else "fail",
            "margin": self.margin,
            "witness_t": self.witness_t,
            "witness_state": self.witness_state,
            "samples": self.samples,
            "note": self.note,
        }


@dataclass
class CheckReport:
    target: str
    system: str
    conditions: list[ConditionResult]
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(c.verdict for c in self.conditions)

    def __getitem__(self, cid: str) -> ConditionResult:
        for c in self.conditions:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def ids(self) -> list[str]:
        return [c.id for c in self.conditions]

    def min_margin(self) -> float:
        return min(c.margin for c in self.conditions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "system": self.system,
            "conditions": [c.to_dict() for c in self.conditions],
            "overall": "pass" if self.overall else "fail",
            "info": self.info,
        }


class _Collector:
    """Accumulates (lhs, rhs) pairs for one condition."""

    def __init__(self, cid: str, tol: Tolerance, note: str = ""):
        self.id = cid
        self.tol = tol
        self.note = note
        self.lhs: list[float] = []
        self.rhs: list[float] = []
        self.where: list[tuple[float | None, Any]] = []

    def add(self, lhs, rhs, t, state):
        self.lhs.append(float(lhs))
        self.rhs.append(float(rhs))
        self.where.append((t, state))

    def extend(self, lhs, rhs, ts, states):
        for l_, r_, t_, s_ in zip(lhs, rhs, ts, states):
            self.add(l_, r_, t_, s_)

    def result(self) -> ConditionResult:
        if not self.lhs:
            return ConditionResult(self.id, True, math.inf, None, None, 0, self.note or "no samples")
        lhs = np.array(self.lhs)
        rhs = np.array(self.rhs)
        margin = rhs - lhs
        if not np.all(np.isfinite(margin)):
            bad = int(np.flatnonzero(~np.isfinite(margin))[0])
            t, s = self.where[bad]
            return ConditionResult(self.id, False, -math.inf, t, _jsonable(s), len(margin),
                                   "non-finite value")
        slack = margin + self.tol.allowance(rhs)
        ok = bool(np.all(slack >= 0))
        j = int(np.argmin(margin)) if ok else int(np.argmin(slack))
        t, s = self.where[j]
        return ConditionResult(self.id, ok, float(margin.min()), t, _jsonable(s), len(margin),
                               self.note)


def _jsonable(state):
    if state is None:
        return None
    if hasattr(state, "current"):  # a History: report x(0) and sup norm
        return {"x0": state.current().tolist(), "sup_norm": state.sup_norm()}
    return np.asarray(state, dtype=float).tolist()


# -- Dini derivative --------------------------------------------------------

def dini_derivative(F, traj: Trajectory, t: float, h_list: Sequence[float] = DEFAULT_H_LIST) -> float:
    """Max over ``h`` of the forward quotient ``(F(x(t+h)) - F(x(t))) / h``."""
    if not h_list:
        raise InputError("h_list must be non-empty")
    if t < 0 or t + max(h_list) > traj.t_f + 1e-12:
        raise InputError(f"t={t} with step {max(h_list)} leaves the horizon [0, {traj.t_f}]")
    f0 = float(F(traj.state_at(t)))
    return max((float(F(traj.state_at(t + h))) - f0) / h for h in h_list)


# -- checks -----------------------------------------------------------------

@dataclass(frozen=True)
class _Opts:
    tol: Tolerance
    h_list: tuple
    dini: str
    checkpoints: int
    cfg: IntegratorConfig


def _derivative(F: ScalarField, state, traj, t, opts: _Opts) -> float:
    if F.closed_form_derivative is not None and opts.dini != "fd":
        return float(F.closed_form_derivative(state))
    if traj is None:
        raise InputError(f"{F.name or 'field'} has no closed-form derivative and no trajectory")
    return dini_derivative(F, traj, t, opts.h_list)


def _needs_fd(cert: Certificate, opts: _Opts) -> bool:
    fields = [cert.V, cert.W]
    return any(f is not None and (f.closed_form_derivative is None or opts.dini == "fd") for f in fields)


def _checkpoints(traj: Trajectory, n: int, h_max: float) -> np.ndarray:
    idx = np.arange(len(traj.times))
    usable = traj.times + h_max <= traj.t_f + 1e-12
    idx = idx[usable]
    if idx.size > n:
        idx = idx[np.unique(np.linspace(0, idx.size - 1, n).round().astype(int))]
    return idx


def _short_trajectories(sys, states, cert, opts: _Opts):
    """Short solutions from sampled states for finite-difference Dini estimates."""
    if not _needs_fd(cert, opts):
        return [None] * len(states)
    h = max(opts.h_list)
    horizon = max(2 * h, opts.cfg.dde_step if sys.is_delay else 2 * h)
    cfg = opts.cfg.with_tf(horizon)
    return [integrate(sys, s, cfg) for s in states]


def _shell_sups(sys, states, vals, R):
    edges = R * np.array([0.25, 0.5, 0.75, 1.0])
    norms = np.array([sys.norm(s) for s in states]) if states else np.array([])
    out = []
    for e in edges:
        m = norms <= e * (1 + 1e-12)
        out.append({"radius": float(e), "sup": float(np.max(vals[m])) if np.any(m) else 0.0,
                    "samples": int(np.sum(m))})
    return out


def _prepare(sys, cert, target_ok, R, N, trajs, tol, seed, h_list, dini, checkpoints, cfg):
    if cert.target not in target_ok:
        raise InputError(f"certificate targets {cert.target}, check expects {'/'.join(target_ok)}")
    if dini not in ("auto", "fd"):
        raise InputError(f"dini must be 'auto' or 'fd', got {dini!r}")
    opts = _Opts(tol or Tolerance(), tuple(h_list), dini, int(checkpoints), cfg or IntegratorConfig())
    states = sample_domain(sys, R, N, seed) if N and N > 0 else []
    trajs = list(trajs or [])
    if _needs_fd(cert, opts):
        for tr in trajs:
            if tr.t_f < max(opts.h_list):
                raise InputError(f"trajectory horizon {tr.t_f} shorter than Dini step {max(opts.h_list)}")
    return opts, states, trajs


def _run(sys, cert: Certificate, ids: list[str], R, N, trajs, tol, seed, h_list, dini, checkpoints,
         cfg, target_ok) -> CheckReport:
    """Shared engine: ``ids`` lists the condition ids to evaluate."""
    opts, states, trajs = _prepare(sys, cert, target_ok, R, N, trajs, tol, seed, h_list, dini,
                                   checkpoints, cfg)
    col = {cid: _Collector(cid, opts.tol) for cid in ids}
    a, b, rho, gamma, zeta = cert.a, cert.b, cert.rho, cert.gamma, cert.zeta
    V, W = cert.V, cert.W

    def pointwise(state, t, x0_norm=None):
        y = np.linalg.norm(np.asarray(sys.output(state), dtype=float))
        w = W(state)
        v = V(state) if V is not None else None
        if "output_bound" in col:
            col["output_bound"].add(a(y), w, t, state)
        if "sandwich_lower" in col:
            col["sandwich_lower"].add(a(y), v, t, state)
        if "sandwich_upper" in col:
            col["sandwich_upper"].add(v, b(sys.norm(state)), t, state)
        if "w_dominated" in col:
            col["w_dominated"].add(w, zeta(v), t, state)
        if "output_envelope" in col and x0_norm is not None:
            col["output_envelope"].add(a(y), b(x0_norm), t, state)
        return w

    derivative_ids = {"dissipation", "w_nonincreasing_rate", "w_growth_upper", "w_growth_lower"}
    with_deriv = bool(derivative_ids & set(col))
    fd = _needs_fd(cert, opts)

    short = _short_trajectories(sys, states, cert, opts) if with_deriv else [None] * len(states)
    for s, tr in zip(states, short):
        pointwise(s, None)
        if with_deriv:
            _deriv_only(col, cert, s, None if tr is None else 0.0, tr, opts)

    h_max = max(opts.h_list) if fd else 0.0
    for tr in trajs:
        x0_norm = sys.norm(tr.x0)
        w_vals = np.empty(len(tr.times))
        for i, t in enumerate(tr.times):
            w_vals[i] = pointwise(tr.state_at(t), float(t), x0_norm)
        if "w_nonincreasing" in col:
            run = np.minimum.accumulate(w_vals)
            for i in range(1, len(w_vals)):
                col["w_nonincreasing"].add(w_vals[i], run[i - 1], float(tr.times[i]),
                                           tr.state_at(tr.times[i]))
        if with_deriv:
            for i in _checkpoints(tr, opts.checkpoints, h_max):
                t = float(tr.times[i])
                _deriv_only(col, cert, tr.state_at(t), t, tr, opts)

    # the rate form of W's monotonicity is reported under the same id
    if "w_nonincreasing_rate" in col:
        rate = col.pop("w_nonincreasing_rate")
        if "w_nonincreasing" in col:
            tgt = col["w_nonincreasing"]
            tgt.lhs += rate.lhs
            tgt.rhs += rate.rhs
            tgt.where += rate.where
        else:
            rate.id = "w_nonincreasing"
            col["w_nonincreasing"] = rate

    results = [col[cid].result() for cid in ids if cid in col]

    info: dict[str, Any] = {
        "samples": len(states),
        "trajectories": len(trajs),
        "R": R,
        "seed": seed,
        "tolerance": {"abs": opts.tol.abs, "rel": opts.tol.rel},
        "derivatives": "finite-difference" if fd else "closed-form",
        "h_list": list(opts.h_list),
    }
    if states and V is not None:
        sums = np.array([V(s) + W(s) for s in states])
        shells = _shell_sups(sys, states, sums, R)
        info["sup_V_plus_W"] = shells
        results.append(ConditionResult("sup_bounded", bool(np.all(np.isfinite(sums))),
                                       math.inf if np.all(np.isfinite(sums)) else -math.inf,
                                       None, None, len(states),
                                       "sampled sup of V+W per radius shell (sampling check)"))
    return CheckReport(cert.target, sys.name, results, info)


def _deriv_only(col, cert, state, t, traj, opts):
    V, W = cert.V, cert.W
    w = W(state)
    v = V(state) if V is not None else None
    if "dissipation" in col:
        col["dissipation"].add(_derivative(V, state, traj, t, opts), -cert.rho(w), t, state)
    if any(c in col for c in ("w_nonincreasing_rate", "w_growth_upper", "w_growth_lower")):
        dw = _derivative(W, state, traj, t, opts)
        if "w_nonincreasing_rate" in col:
            col["w_nonincreasing_rate"].add(dw, 0.0, t, state)
        if "w_growth_upper" in col:
            col["w_growth_upper"].add(dw, cert.gamma(v), t, state)
        if "w_growth_lower" in col:
            col["w_growth_lower"].add(-cert.gamma(v), dw, t, state)


_COMMON = dict(h_list=DEFAULT_H_LIST, dini="auto", checkpoints=200, cfg=None)


def check_thm1(sys, cert: Certificate, R: float, N: int, trajs=(), tol: Tolerance | None = None,
               seed: int = 0, **kw) -> CheckReport:
    """Dissipation ``dV <= -rho(W)``, output bound ``a(|h|) <= W``, and
    ``W`` non-increasing (rate at samples, knot pairs along trajectories)."""
    opts = {**_COMMON, **kw}
    ids = ["output_bound", "dissipation", "w_nonincreasing_rate", "w_nonincreasing"]
    return _run(sys, cert, ids, R, N, trajs, tol, seed, opts["h_list"], opts["dini"],
                opts["checkpoints"], opts["cfg"], ("thm1",))


def _thm2_ids(cert: Certificate) -> list[str]:
    ids = ["sandwich_lower", "sandwich_upper", "output_bound", "dissipation",
           "w_growth_upper" if cert.which_side == "upper" else "w_growth_lower"]
    if not cert.rho.monotone:
        ids.append("w_dominated")
    return ids


def check_thm2(sys, cert: Certificate, R: float, N: int, trajs=(), tol: Tolerance | None = None,
               seed: int = 0, **kw) -> CheckReport:
    """Sandwich bounds on ``V``, dissipation, output bound, one-sided growth
    bound on ``W`` and, for non-monotone ``rho``, ``W <= zeta(V)``."""
    opts = {**_COMMON, **kw}
    return _run(sys, cert, _thm2_ids(cert), R, N, trajs, tol, seed, opts["h_list"], opts["dini"],
                opts["checkpoints"], opts["cfg"], ("thm2",))


def check_prop1(sys, cert: Certificate, trajs=(), tol: Tolerance | None = None, R: float = 1.0,
                N: int = 0, seed: int = 0, **kw) -> CheckReport:
    """Output bound, ``W`` non-increasing, and the implied estimate
    ``a(|y(t)|) <= b(|x0|)`` along every trajectory."""
    opts = {**_COMMON, **kw}
    z = cert.W(sys.zero())
    if abs(z) > 0:
        raise InputError(f"W(0) = {z} must vanish for the output-stability check")
    ids = ["output_bound", "w_nonincreasing", "output_envelope"]
    return _run(sys, cert, ids, R, N, trajs, tol, seed, opts["h_list"], opts["dini"],
                opts["checkpoints"], opts["cfg"], ("prop1",))


def check_cor1(sys, cert: Certificate, R: float, N: int, trajs=(), tol: Tolerance | None = None,
               seed: int = 0, **kw) -> CheckReport:
    """Delay-system version of :func:`check_thm1` on histories."""
    if not sys.is_delay:
        raise InputError("check_cor1 expects a delay system")
    opts = {**_COMMON, **kw}
    ids = ["output_bound", "dissipation", "w_nonincreasing_rate", "w_nonincreasing"]
    return _run(sys, cert, ids, R, N, trajs, tol, seed, opts["h_list"], opts["dini"],
                opts["checkpoints"], opts["cfg"], ("cor1",))


def check_cor2(sys, cert: Certificate, R: float, N: int, trajs=(), tol: Tolerance | None = None,
               seed: int = 0, **kw) -> CheckReport:
    """Delay-system version of :func:`check_thm2` on histories."""
    if not sys.is_delay:
        raise InputError("check_cor2 expects a delay system")
    opts = {**_COMMON, **kw}
    return _run(sys, cert, _thm2_ids(cert), R, N, trajs, tol, seed, opts["h_list"], opts["dini"],
                opts["checkpoints"], opts["cfg"], ("cor2",))


def check(sys, cert: Certificate, R: float = 1.0, N: int = 0, trajs=(), tol=None, seed: int = 0,
          **kw) -> CheckReport:
    """Dispatch on ``cert.target``."""
    if cert.target == "prop1":
        return check_prop1(sys, cert, trajs, tol, R=R, N=N, seed=seed, **kw)
    fn = {"thm1": check_thm1, "thm2": check_thm2, "cor1": check_cor1, "cor2": check_cor2}[cert.target]
    return fn(sys, cert, R, N, trajs, tol, seed, **kw)
