"""Quasi-uniform continuity of sampled signals and the relaxed Barbalat test.

A signal ``f`` is quasi-uniformly continuous (QUC) when for every ``eps`` some
``delta`` makes ``f(t) - f(t0) < eps`` whenever ``t0 <= t <= t0 + delta``: fast
downward moves are allowed, fast upward moves are not.  Every verdict here is
relative to the sampling grid and horizon, which the results carry along.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from .certificates import ComparisonFn
from .errors import InputError

__all__ = [
    "Signal",
    "QucResult",
    "quc_verdict",
    "uc_verdict",
    "prop2_check",
    "Lemma3Report",
    "lemma3_check",
    "catalog_signal",
    "CATALOG",
    "EXPECTED_QUC",
    "DEFAULT_EPS",
]

DEFAULT_EPS = (0.5, 0.1, 0.01)


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled scalar signal ``v[i] = f(t[i])``."""

    t: np.ndarray
    v: np.ndarray
    name: str = "signal"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise InputError("signal needs matching 1-d arrays with at least two samples")
        dt = np.diff(t)
        if not np.all(dt > 0):
            raise InputError("signal times must be strictly increasing")
        if np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
            raise InputError("signal grid must be uniform")
        if not np.all(np.isfinite(v)):
            raise InputError(f"signal {self.name} has non-finite values")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (self.t.size - 1))

    @property
    def horizon(self) -> float:
        return float(self.t[-1] - self.t[0])

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], dt: float = 1e-3,
                      horizon: float = 100.0, name: str = "signal") -> "Signal":
        if not (dt > 0 and horizon > 0):
            raise InputError("dt and horizon must be positive")
        n = int(round(horizon / dt)) + 1
        t = np.arange(n) * dt
        return cls(t, np.asarray(fn(t), dtype=float) * np.ones_like(t), name)

    def negated(self) -> "Signal":
        return Signal(self.t, -self.v, f"-({self.name})")

    def truncated(self, horizon: float) -> "Signal":
        keep = self.t - self.t[0] <= horizon * (1 + 1e-12)
        return Signal(self.t[keep], self.v[keep], self.name)


# -- quasi-uniform continuity ------------------------------------------------

def _forward_max(v: np.ndarray, k: int) -> np.ndarray:
    """``out[i] = max(v[i : i + k + 1])`` (window truncated at the end)."""
    size = k + 1
    padded = np.concatenate([v, np.full(size, v[-1])])
    out = maximum_filter1d(padded, size=size, mode="nearest")
    half = size // 2
    return out[half: half + v.size]


def _increments(v: np.ndarray, k: int) -> np.ndarray:
    """``max_{0 <= j <= k} v[i+j] - v[i]`` for every ``i``."""
    return _forward_max(v, k) - v


@dataclass
class QucResult:
    eps: float
    quc: bool
    delta: float | None
    witness: tuple[float, float] | None
    dt: float
    horizon: float

    def to_dict(self) -> dict[str, Any]:
        return {"eps": self.eps, "quc": self.quc, "delta": self.delta,
                "witness": None if self.witness is None else list(self.witness),
                "dt": self.dt, "horizon": self.horizon}


def _check_eps(eps_list):
    eps_list = tuple(float(e) for e in eps_list)
    if not eps_list or any(not e > 0 for e in eps_list):
        raise InputError("eps_list must contain positive values")
    return eps_list


def _geometric_ks(n: int) -> list[int]:
    ks, k = [], 1
    while k <= n - 1:
        ks.append(k)
        k *= 2
    return ks


def quc_verdict(sig: Signal, eps_list: Sequence[float] = DEFAULT_EPS,
                horizon: float | None = None) -> list[QucResult]:
    """For each ``eps`` the largest ``delta`` in ``{dt, 2dt, 4dt, ...}`` with
    no sampled pair ``t0 <= t <= t0 + delta`` having ``f(t) - f(t0) >= eps``;
    if even ``delta = dt`` fails, the violating pair ``(t0, t)`` instead."""
    eps_list = _check_eps(eps_list)
    if horizon is not None:
        sig = sig.truncated(horizon)
    dt, hz = sig.dt, sig.horizon
    if hz < 10 * dt:
        raise InputError(f"horizon {hz} is shorter than 10 sampling steps (dt={dt})")
    v = sig.v
    worst = []
    for k in _geometric_ks(v.size):
        worst.append((k, float(np.max(_increments(v, k)))))
    inc1 = _increments(v, 1)
    out = []
    for eps in eps_list:
        # increments grow with k, so the accepted windows form an initial segment
        kmax = 0
        for k, w in worst:
            if w >= eps:
                break
            kmax = k
        if kmax:
            out.append(QucResult(eps, True, kmax * dt, None, dt, hz))
        else:
            i = int(np.argmax(inc1))
            j = i + int(np.argmax(v[i: i + 2]))
            out.append(QucResult(eps, False, None, (float(sig.t[i]), float(sig.t[j])), dt, hz))
    return out


def uc_verdict(sig: Signal, eps: float, delta: float) -> bool:
    """Sampled uniform continuity at one ``(eps, delta)``: every pair within
    ``delta`` differs by less than ``eps`` in absolute value."""
    k = max(int(math.floor(delta / sig.dt + 1e-9)), 1)
    up = _increments(sig.v, k)
    down = _increments(-sig.v, k)
    return bool(max(np.max(up), np.max(down)) < eps)


@dataclass
class Prop2Result:
    holds: bool
    M: float
    worst_increase: float
    worst_t: float | None
    witness_t: float | None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def prop2_check(sig: Signal, M: float) -> Prop2Result:
    """Is ``g(t) = f(t) - M t`` non-increasing on the grid (to 1e-12)?

    On failure ``witness_t`` is the first violating grid time and
    ``worst_t`` the one with the largest increase.
    """
    if not M >= 0:
        raise InputError(f"M must be >= 0, got {M}")
    g = sig.v - M * sig.t
    d = np.diff(g)
    i = int(np.argmax(d))
    worst = float(d[i])
    ok = worst <= 1e-12
    if ok:
        return Prop2Result(True, float(M), worst, None, None)
    first = int(np.argmax(d > 1e-12))
    return Prop2Result(False, float(M), worst, float(sig.t[i]), float(sig.t[first]))


# -- relaxed Barbalat lemma -------------------------------------------------

@dataclass
class Lemma3Report:
    signal: str
    dt: float
    horizon: float
    integral: float
    integral_growth_ratio: float
    integral_finite: bool
    quc_f: list[QucResult]
    quc_neg_f: list[QucResult]
    rho_monotone: bool
    f_sup: float
    f_bounded: bool
    hypotheses_met: bool
    tail_window: tuple[float, float]
    tail_sup: float
    tail_decayed: bool
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def prediction(self) -> str:
        return "tail -> 0 expected" if self.hypotheses_met else "no prediction"

    @property
    def conclusion(self) -> str:
        if not self.hypotheses_met:
            return "no conclusion"
        return "confirmed" if self.tail_decayed else "contradicted"

    def to_dict(self) -> dict[str, Any]:
        return {
            "signal": self.signal,
            "dt": self.dt,
            "horizon": self.horizon,
            "integral": self.integral,
            "integral_growth_ratio": self.integral_growth_ratio,
            "integral_finite": self.integral_finite,
            "quc_f": [q.to_dict() for q in self.quc_f],
            "quc_neg_f": [q.to_dict() for q in self.quc_neg_f],
            "f_is_quc": all(q.quc for q in self.quc_f),
            "neg_f_is_quc": all(q.quc for q in self.quc_neg_f),
            "rho_monotone": self.rho_monotone,
            "f_sup": self.f_sup,
            "f_bounded": self.f_bounded,
            "hypotheses_met": self.hypotheses_met,
            "tail_window": list(self.tail_window),
            "tail_sup": self.tail_sup,
            "tail_decayed": self.tail_decayed,
            "prediction": self.prediction,
            "conclusion": self.conclusion,
            **self.info,
        }


def lemma3_check(sig: Signal, rho: ComparisonFn, rho_monotone: bool | None = None,
                 eps_list: Sequence[float] = DEFAULT_EPS, tail_fraction: float = 0.01,
                 growth_limit: float = 0.01, decay_tol: float = 1e-2) -> Lemma3Report:
    """Evaluate the hypotheses and conclusion of the relaxed Barbalat lemma.

    * integral of ``rho(f)`` by the trapezoid rule; called finite when the
      last quarter of the horizon adds less than ``growth_limit`` of the total
    * QUC verdicts for ``f`` and ``-f`` at every ``eps``
    * ``rho`` non-decreasing (flag, or sampled on ``[0, sup f]``) or ``f``
      bounded (the second half of the record does not exceed the first by 1%)
    * sup of ``f`` over the final ``tail_fraction`` of the horizon; the tail
      counts as decayed when it is below ``decay_tol * max(1, sup f)``
    """
    v = sig.v
    if np.any(v < 0):
        raise InputError("the relaxed Barbalat test needs a nonnegative signal")
    rv = np.asarray(rho(v), dtype=float)
    run = np.concatenate([[0.0], np.cumsum(0.5 * (rv[1:] + rv[:-1]) * np.diff(sig.t))])
    total = float(run[-1])
    q = int(np.searchsorted(sig.t, sig.t[0] + 0.75 * sig.horizon))
    late = float(run[-1] - run[q])
    ratio = late / total if total > 0 else 0.0
    finite = late <= growth_limit * total + 1e-300

    quc_f = quc_verdict(sig, eps_list)
    quc_nf = quc_verdict(sig.negated(), eps_list)
    either = all(r.quc for r in quc_f) or all(r.quc for r in quc_nf)

    f_sup = float(np.max(v))
    if rho_monotone is None:
        grid = np.linspace(0.0, max(f_sup, 1e-12), 2001)
        rho_monotone = bool(rho.monotone and np.all(np.diff(np.asarray(rho(grid))) >= 0))
    half = v.size // 2
    bounded = float(np.max(v[half:])) <= 1.01 * float(np.max(v[: half + 1])) + 1e-12

    met = bool(finite and either and (rho_monotone or bounded))
    t_cut = sig.t[-1] - tail_fraction * sig.horizon
    tail = v[sig.t >= t_cut - 1e-12]
    tail_sup = float(np.max(tail))
    decayed = tail_sup <= decay_tol * max(1.0, f_sup)
    return Lemma3Report(sig.name, sig.dt, sig.horizon, total, ratio, bool(finite), quc_f, quc_nf,
                        bool(rho_monotone), f_sup, bool(bounded), met,
                        (float(t_cut), float(sig.t[-1])), tail_sup, bool(decayed),
                        {"rho": rho.describe()})


# -- catalog ----------------------------------------------------------------

def _floor(t):
    # guard against grid times like 2.9999999999999996
    return np.floor(t + 1e-9)


def _spike_train(t):
    """Triangular spikes of height 1 and base width 2^-i centred at t = i."""
    i = np.rint(t)
    width = np.exp2(-i)
    return np.maximum(0.0, 1.0 - 2.0 * np.abs(t - i) / width)


CATALOG: dict[str, tuple[Callable[[np.ndarray], np.ndarray], float, float]] = {
    # name: (function, default dt, default horizon)
    "sin": (np.sin, 0.01, 100.0),
    "neg_floor": (lambda t: -_floor(t), 0.01, 100.0),
    "floor": (_floor, 0.01, 100.0),
    "sin_sq": (lambda t: np.sin(t * t), 0.01, 100.0),
    "neg_t": (lambda t: -t, 0.01, 100.0),
    "t": (lambda t: t, 0.01, 100.0),
    "inv1pt": (lambda t: 1.0 / (1.0 + t), 0.01, 1000.0),
    "spike_train": (_spike_train, 1e-4, 100.0),
    "zero": (lambda t: np.zeros_like(t), 0.01, 100.0),
}

# grid-resolvable QUC verdicts of the six-signal catalog at eps = 0.5 and 0.1
EXPECTED_QUC = {
    "sin": True,
    "neg_floor": True,
    "floor": False,
    "sin_sq": False,
    "neg_t": True,
    "t": True,
}


def catalog_signal(name: str, dt: float | None = None, horizon: float | None = None) -> Signal:
    if name not in CATALOG:
        raise InputError(f"unknown signal {name!r}; known: {', '.join(CATALOG)}")
    fn, dt0, hz0 = CATALOG[name]
    return Signal.from_function(fn, dt or dt0, horizon or hz0, name)
