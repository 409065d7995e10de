"""Uniform convergence-time bound and its empirical counterpart.

The analytic bound is ``T = (1 + sup V) / rho_min`` where the sups run over
``B_R`` intersected with the domain and ``rho_min`` is the minimum of ``rho`` on
``[a(eps), a(eps) + sup W]``.  Sups are estimated from quasi-random samples
plus points on the boundary shell, then inflated by a safety factor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import qmc

from .certificates import Certificate
from .errors import InputError, IntegrationError, NumericError
from .integrate import IntegratorConfig, Trajectory, integrate
from .systems import sample_domain, shrink_into_domain

__all__ = [
    "AnalyticBound",
    "analytic_T",
    "analytic_bound",
    "rho_interval_min",
    "empirical_conv_time",
    "SampleResult",
    "ConvergenceReport",
    "uniformity_sweep",
    "EnvelopeTable",
    "envelope",
    "sup_samples",
]

DEFAULT_INFLATION = 1.02
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# -- analytic bound ---------------------------------------------------------

def _golden_min(fn, lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    x = c if fc <= fd else d
    return x, min(fc, fd)


def rho_interval_min(rho, lo: float, hi: float, n_grid: int = 1024, tol: float = 1e-10) -> float:
    """Minimum of ``rho`` on ``[lo, hi]``: grid search, then golden section
    on the bracket around the best grid point (endpoints always included)."""
    if hi < lo:
        raise InputError(f"empty interval [{lo}, {hi}]")
    if hi == lo:
        return float(rho(lo))
    grid = np.linspace(lo, hi, n_grid)
    vals = np.asarray(rho(grid), dtype=float)
    j = int(np.argmin(vals))
    best = float(vals[j])
    a = grid[max(j - 1, 0)]
    b = grid[min(j + 1, n_grid - 1)]
    _, refined = _golden_min(lambda s: float(rho(s)), a, b, tol)
    return min(best, refined, float(rho(lo)), float(rho(hi)))


def sup_samples(sys, R: float, N: int, seed: int) -> list:
    """States in ``B_R`` and the domain for sup estimates: scrambled Sobol
    points (ODE) or sampled histories (delay), plus a boundary shell."""
    rng = np.random.default_rng(seed)
    n_shell = max(N // 8, 1)
    if sys.is_delay:
        states = sample_domain(sys, R, N, seed)
        for i in range(n_shell):
            base = sample_domain(sys, R, 1, int(rng.integers(2 ** 31)))[0]
            sup = base.sup_norm()
            if sup > 0:
                states.append(shrink_into_domain(sys, base.scaled(R / sup), 0.99, 2000))
        return states
    n = sys.n
    m = 1 << max(int(math.ceil(math.log2(max(2 * N, 2)))), 1)
    pts = (2.0 * qmc.Sobol(d=n, scramble=True, seed=seed).random(m) - 1.0) * R
    pts = pts[np.linalg.norm(pts, axis=1) <= R]
    d = rng.standard_normal((4 * n_shell, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    shell = d * R * (1.0 - 1e-9)
    cand = np.vstack([pts, shell, np.zeros((1, n))])
    if sys.in_domain is not None:
        cand = cand[[bool(sys.in_domain(x)) for x in cand]]
    if len(cand) == 0:
        raise InputError("no sampled state lies in the domain")
    return list(cand)


@dataclass
class AnalyticBound:
    T: float
    sup_V: float
    sup_W: float
    rho_tilde: float
    a_eps: float
    inflation: float
    n_samples: int

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def analytic_bound(cert: Certificate, sys, eps: float, R: float, N_sup: int = 4096,
                   N_min: int = 1024, seed: int = 0, inflation: float = DEFAULT_INFLATION,
                   states: Sequence | None = None) -> AnalyticBound:
    """Convergence-time bound with its ingredients."""
    if cert.target not in ("thm1", "cor1"):
        raise InputError(f"analytic bound needs a thm1/cor1 certificate, got {cert.target}")
    if not (eps > 0 and R > 0):
        raise InputError("eps and R must be positive")
    if inflation < 1:
        raise InputError("inflation factor must be >= 1")
    pts = list(states) if states is not None else sup_samples(sys, R, N_sup, seed)
    vs = np.array([cert.V(x) for x in pts])
    ws = np.array([cert.W(x) for x in pts])
    sup_V = inflation * float(np.max(vs))
    sup_W = inflation * float(np.max(ws))
    a_eps = float(cert.a(eps))
    rho_t = rho_interval_min(cert.rho, a_eps, a_eps + sup_W, N_min)
    if not rho_t > 0:
        raise NumericError(f"rho is not positive on [{a_eps:g}, {a_eps + sup_W:g}] (min {rho_t:g})")
    return AnalyticBound((1.0 + sup_V) / rho_t, sup_V, sup_W, rho_t, a_eps, inflation, len(pts))


def analytic_T(cert: Certificate, sys, eps: float, R: float, N_sup: int = 4096, N_min: int = 1024,
               **kw) -> float:
    return analytic_bound(cert, sys, eps, R, N_sup, N_min, **kw).T


# -- empirical convergence time ---------------------------------------------

def _output_norm(traj: Trajectory, t: float) -> float:
    return float(np.linalg.norm(traj.output_at(t)))


def empirical_conv_time(traj: Trajectory, eps: float, resolution: float = 1e-6) -> float:
    """Time after which ``|y| <= eps`` on the rest of the horizon.

    The last knot with ``|y| > eps`` is refined by bisection on the dense
    output; the right end of the final bracket is returned.  Returns 0 if
    ``|y| <= eps`` at every knot and ``math.inf`` (not converged) if the
    output exceeds ``eps`` at the final time or within the last 5% of the
    horizon.
    """
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps}")
    norms = traj.output_norms()
    over = np.flatnonzero(norms > eps)
    if over.size == 0:
        return 0.0
    j = int(over[-1])
    t_f = traj.t_f
    if j == len(norms) - 1 or traj.times[j] >= 0.95 * t_f:
        return math.inf
    lo, hi = float(traj.times[j]), float(traj.times[j + 1])
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _output_norm(traj, mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


# -- sweeps -----------------------------------------------------------------

@dataclass
class SampleResult:
    id: int
    x0: Any
    norm: float
    T_emp: float
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "x0": self.x0, "norm": self.norm,
                "T_emp": None if math.isinf(self.T_emp) else self.T_emp,
                "converged": math.isfinite(self.T_emp), "note": self.note}


@dataclass
class ConvergenceReport:
    epsilon: float
    R: float
    T_analytic: float | None
    samples: list[SampleResult]
    horizon: float
    seed: int
    bound: AnalyticBound | None = None
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def T_emp_sup(self) -> float:
        return max((s.T_emp for s in self.samples), default=0.0)

    @property
    def witness(self) -> SampleResult | None:
        if not self.samples:
            return None
        return max(self.samples, key=lambda s: (s.T_emp, -s.id))

    @property
    def verdict(self) -> str:
        if self.T_analytic is None:
            return "inconclusive"
        if any(s.T_emp > self.T_analytic for s in self.samples):
            return "bound-violated"
        return "uniform-consistent"

    def to_dict(self) -> dict[str, Any]:
        sup = self.T_emp_sup
        w = self.witness
        return {
            "epsilon": self.epsilon,
            "R": self.R,
            "T_analytic": self.T_analytic,
            "T_emp_sup": None if math.isinf(sup) else sup,
            "verdict": self.verdict,
            "witness": None if w is None else w.to_dict(),
            "horizon": self.horizon,
            "seed": self.seed,
            "n_samples": len(self.samples),
            "bound": None if self.bound is None else self.bound.as_dict(),
            "samples": [s.to_dict() for s in self.samples],
            "info": self.info,
        }


def _describe(sys, x0):
    if sys.is_delay:
        return {"x0": x0.current().tolist(), "sup_norm": x0.sup_norm()}
    return np.asarray(x0, dtype=float).tolist()


def shell_states(sys, R: float, n: int, seed: int, factor: float = 1.0 - 1e-6) -> list:
    """States on the sphere of radius ``factor*R`` (pulled into the domain)."""
    rng = np.random.default_rng(seed)
    out = []
    if sys.is_delay:
        for x in sample_domain(sys, R, n, seed):
            sup = x.sup_norm()
            if sup > 0:
                out.append(shrink_into_domain(sys, x.scaled(factor * R / sup), 0.99, 2000))
        return out
    tries = 0
    while len(out) < n and tries < 1000 * max(n, 1):
        d = rng.standard_normal(sys.n)
        d *= factor * R / np.linalg.norm(d)
        tries += 1
        if sys.in_domain is None or sys.in_domain(d):
            out.append(d)
    return out


def _run_one(sys, x0, cfg, eps):
    try:
        traj = integrate(sys, x0, cfg)
    except IntegrationError as exc:
        return math.inf, f"integration failed: {exc}"
    return empirical_conv_time(traj, eps), ""


def uniformity_sweep(sys, cert: Certificate | None, eps: float, R: float, N: int, seed: int,
                     cfg: IntegratorConfig | None = None, threads: int = 1,
                     initial_states: Sequence | None = None, shell_fraction: float = 0.1,
                     N_sup: int = 4096, inflation: float = DEFAULT_INFLATION) -> ConvergenceReport:
    """Measure convergence times from ``N`` initial states in ``B_R``.

    A fraction ``shell_fraction`` of the states lies on the boundary sphere so
    that the slowest initial conditions are represented.  With a thm1/cor1
    certificate the analytic bound is computed and compared.
    """
    if N < 1 and initial_states is None:
        raise InputError(f"N must be >= 1, got {N}")
    bound = None
    if cert is not None:
        bound = analytic_bound(cert, sys, eps, R, N_sup=N_sup, seed=seed, inflation=inflation)
    base = cfg or IntegratorConfig()
    horizon = max(10.0, 2.0 * bound.T) if bound is not None else base.t_f
    run_cfg = base.with_tf(horizon)
    if initial_states is not None:
        states = list(initial_states)
    else:
        n_shell = int(round(shell_fraction * N)) if N > 1 else 0
        states = sample_domain(sys, R, N - n_shell, seed)
        if n_shell:
            states += shell_states(sys, R, n_shell, seed + 1)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(lambda x: _run_one(sys, x, run_cfg, eps), states))
    else:
        outs = [_run_one(sys, x, run_cfg, eps) for x in states]
    samples = [SampleResult(i, _describe(sys, x), float(sys.norm(x)), T, note)
               for i, (x, (T, note)) in enumerate(zip(states, outs))]
    return ConvergenceReport(eps, R, None if bound is None else bound.T, samples, horizon, seed,
                             bound, {"shell_fraction": shell_fraction, "integrator": run_cfg.as_dict()})


# -- envelopes --------------------------------------------------------------

@dataclass
class EnvelopeTable:
    radii: np.ndarray
    times: np.ndarray
    zeta: np.ndarray     # zeta[j]: sup over samples and knots of |y|, |x0| <= radii[j]
    M: np.ndarray        # M[i, j]: sup over samples of |y(times[i])|, |x0| <= radii[j]
    N: int
    seed: int

    def zeta_at(self, s: float) -> float:
        """Envelope at the smallest tabulated radius ``>= s``."""
        j = int(np.searchsorted(self.radii, s - 1e-12))
        if j >= len(self.radii):
            raise InputError(f"radius {s} beyond the table (max {self.radii[-1]})")
        return float(self.zeta[j])

    def to_dict(self) -> dict[str, Any]:
        return {"radii": self.radii.tolist(), "times": self.times.tolist(),
                "zeta": self.zeta.tolist(), "M": self.M.tolist(), "N": self.N, "seed": self.seed}


def envelope(sys, radii: Sequence[float], times: Sequence[float], N: int, seed: int,
             cfg: IntegratorConfig | None = None, shell_fraction: float = 0.25,
             threads: int = 1) -> EnvelopeTable:
    """Monte-Carlo output envelopes over nested balls of initial states."""
    radii = np.asarray(radii, dtype=float)
    times = np.asarray(times, dtype=float)
    if radii.size == 0 or times.size == 0:
        raise InputError("radii and times must be non-empty")
    if np.any(np.diff(radii) <= 0) or np.any(np.diff(times) <= 0) or radii[0] < 0 or times[0] < 0:
        raise InputError("radii and times must be ascending and non-negative")
    base = cfg or IntegratorConfig()
    t_f = max(float(times[-1]), 1e-6)
    run_cfg = base.with_tf(t_f)

    jobs = []
    for j, s in enumerate(radii):
        if s == 0:
            jobs.append((j, sys.zero()))
            continue
        n_shell = int(round(shell_fraction * N))
        st = sample_domain(sys, s, max(N - n_shell, 1), seed + j)
        st += shell_states(sys, s, n_shell, seed + 7919 * (j + 1))
        jobs += [(j, x) for x in st]

    def run(job):
        j, x = job
        tr = integrate(sys, x, run_cfg)
        knot_sup = float(np.max(tr.output_norms()))
        at = np.array([np.linalg.norm(tr.output_at(t)) for t in times])
        return j, knot_sup, at

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(run, jobs))
    else:
        outs = [run(jb) for jb in jobs]

    zeta = np.zeros(radii.size)
    M = np.zeros((times.size, radii.size))
    for j, ks, at in outs:
        zeta[j] = max(zeta[j], ks, float(np.max(at)))
        M[:, j] = np.maximum(M[:, j], at)
    zeta = np.maximum.accumulate(zeta)
    M = np.maximum.accumulate(M, axis=1)
    return EnvelopeTable(radii, times, zeta, M, N, seed)
