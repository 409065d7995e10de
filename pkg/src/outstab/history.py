"""Piecewise cubic Hermite curves and the delay-state window ``x_t``.

A :class:`History` is a view of a global piecewise-cubic curve restricted to
``[t_end - r, t_end]`` and re-parametrised by ``s in [-r, 0]``.  The same knot
arrays back every window of a delay trajectory, so building a window is cheap.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InputError

# Gauss-Legendre nodes on [0, 1]; six nodes integrate degree-11 polynomials exactly.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def hermite_eval(tk: np.ndarray, xk: np.ndarray, dk: np.ndarray, t, derivative: bool = False):
    """Evaluate the cubic Hermite interpolant through ``(tk, xk, dk)``.

    ``tk`` may contain a repeated knot (zero-length segment) to carry a jump
    in the slope; evaluation at the repeated time uses the right-hand piece.
    Exact at knots.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return _hermite_scalar(tk, xk, dk, float(t), derivative)
    idx = np.searchsorted(tk, t, side="right") - 1
    np.minimum(idx, len(tk) - 2, out=idx)
    np.maximum(idx, 0, out=idx)
    t0 = tk[idx]
    h = tk[idx + 1] - t0
    u = (t - t0) / h
    u2 = u * u
    x0, x1, d0, d1 = xk[idx], xk[idx + 1], dk[idx], dk[idx + 1]
    if derivative:
        c = (6 * u2 - 6 * u) / h
        return (c[:, None] * (x0 - x1) + (3 * u2 - 4 * u + 1)[:, None] * d0
                + (3 * u2 - 2 * u)[:, None] * d1)
    u3 = u2 * u
    c01 = 3 * u2 - 2 * u3
    return ((1.0 - c01)[:, None] * x0 + c01[:, None] * x1 + ((u3 - 2 * u2 + u) * h)[:, None] * d0
            + ((u3 - u2) * h)[:, None] * d1)


def _hermite_scalar(tk, xk, dk, t: float, derivative: bool):
    # same formulas as the vector path, on Python floats (hot in the DDE stepper)
    i = int(tk.searchsorted(t, side="right")) - 1
    i = min(max(i, 0), len(tk) - 2)
    t0 = tk[i]
    h = tk[i + 1] - t0
    u = (t - t0) / h
    u2 = u * u
    if derivative:
        return ((6 * u2 - 6 * u) / h) * (xk[i] - xk[i + 1]) + (3 * u2 - 4 * u + 1) * dk[i] \
            + (3 * u2 - 2 * u) * dk[i + 1]
    u3 = u2 * u
    return ((2 * u3 - 3 * u2 + 1) * xk[i] + ((u3 - 2 * u2 + u) * h) * dk[i]
            + (-2 * u3 + 3 * u2) * xk[i + 1] + ((u3 - u2) * h) * dk[i + 1])


# Hermite basis weights at the Gauss-Legendre fractions
_U = _GL_X
_C01 = 3 * _U ** 2 - 2 * _U ** 3
_C10 = _U ** 3 - 2 * _U ** 2 + _U
_C11 = _U ** 3 - _U ** 2


class NodeTable:
    """Gauss-Legendre node times, values and weights of every inter-knot piece
    of one piecewise-cubic curve, computed lazily and shared by all windows."""

    __slots__ = ("tk", "xk", "dk", "t", "x", "w", "count")

    def __init__(self, tk: np.ndarray, xk: np.ndarray, dk: np.ndarray):
        self.tk, self.xk, self.dk = tk, xk, dk
        m = max(len(tk) - 1, 0)
        self.t = np.empty((m, _U.size))
        self.x = np.empty((m, _U.size, xk.shape[1]))
        self.w = np.empty((m, _U.size))
        self.count = 0

    def fill(self, upto: int) -> None:
        """Make pieces ``0 .. upto-1`` available (knots up to ``upto`` must be final)."""
        if upto <= self.count:
            return
        i = np.arange(self.count, upto)
        t0 = self.tk[i]
        h = self.tk[i + 1] - t0
        x0, x1 = self.xk[i][:, None, :], self.xk[i + 1][:, None, :]
        d0, d1 = self.dk[i][:, None, :], self.dk[i + 1][:, None, :]
        hc = h[:, None, None]
        self.t[i] = t0[:, None] + h[:, None] * _U[None, :]
        self.x[i] = ((1.0 - _C01)[None, :, None] * x0 + _C01[None, :, None] * x1
                     + hc * (_C10[None, :, None] * d0 + _C11[None, :, None] * d1))
        self.w[i] = h[:, None] * _GL_W[None, :]
        self.count = upto


class History:
    """State of a delay system: the curve ``s -> x(t_end + s)`` on ``[-r, 0]``.

    ``head`` optionally extends the curve linearly past the last knot to a
    provisional point ``(t_head, x_head)``; Runge-Kutta stages use it.
    """

    __slots__ = ("r", "_tk", "_xk", "_dk", "t_end", "_head", "_quad_cache", "_table")

    def __init__(self, r: float, tk, xk, dk, t_end: float | None = None, head=None,
                 table: NodeTable | None = None):
        if not r > 0:
            raise InputError(f"delay horizon must be positive, got {r}")
        self.r = float(r)
        self._tk = tk
        self._xk = xk
        self._dk = dk
        self._head = head
        self._quad_cache = None
        self._table = table
        if t_end is None:
            t_end = head[0] if head is not None else float(tk[-1])
        self.t_end = float(t_end)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_function(cls, r: float, fn: Callable, dfn: Callable | None = None,
                      n_seg: int = 64) -> "History":
        """Interpolate ``fn`` on ``[-r, 0]`` (exact when ``fn`` is a cubic and
        ``dfn`` its derivative)."""
        s = np.linspace(-r, 0.0, n_seg + 1)
        xs = np.atleast_2d(np.array([np.atleast_1d(fn(si)) for si in s], dtype=float))
        if xs.shape[0] != s.size:
            xs = xs.T
        if dfn is None:
            ds = np.gradient(xs, s, axis=0, edge_order=2)
        else:
            ds = np.atleast_2d(np.array([np.atleast_1d(dfn(si)) for si in s], dtype=float))
        return cls(r, s, xs, ds, t_end=0.0)

    @classmethod
    def constant(cls, r: float, x) -> "History":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        tk = np.array([-float(r), 0.0])
        return cls(r, tk, np.vstack([x, x]), np.zeros((2, x.size)), t_end=0.0)

    @classmethod
    def zero(cls, r: float, n: int) -> "History":
        return cls.constant(r, np.zeros(n))

    def scaled(self, c: float) -> "History":
        head = None if self._head is None else (self._head[0], c * self._head[1])
        return History(self.r, self._tk, c * self._xk, c * self._dk, self.t_end, head)

    # -- queries -----------------------------------------------------------

    @property
    def n(self) -> int:
        return self._xk.shape[1]

    def _eval(self, tau, derivative=False):
        tau = np.asarray(tau, dtype=float)
        if self._head is None:
            return hermite_eval(self._tk, self._xk, self._dk, tau, derivative)
        t_last, x_last = self._tk[-1], self._xk[-1]
        t_h, x_h = self._head
        slope = (x_h - x_last) / (t_h - t_last)
        if tau.ndim == 0:
            if tau > t_last:
                return slope.copy() if derivative else x_last + (tau - t_last) * slope
            return hermite_eval(self._tk, self._xk, self._dk, tau, derivative)
        out = hermite_eval(self._tk, self._xk, self._dk, tau, derivative)
        beyond = tau > t_last
        if np.any(beyond):
            if derivative:
                out[beyond] = slope
            else:
                out[beyond] = x_last + (tau[beyond] - t_last)[:, None] * slope
        return out

    def query(self, s):
        """Value ``x(t_end + s)`` for ``s`` in ``[-r, 0]`` (scalar or array)."""
        if np.ndim(s) == 0 and s == 0.0:
            return self.current()
        return self._eval(self.t_end + np.asarray(s, dtype=float))

    def derivative(self, s):
        return self._eval(self.t_end + np.asarray(s, dtype=float), derivative=True)

    def current(self) -> np.ndarray:
        if self._head is not None:
            return self._head[1].copy()
        if self.t_end == self._tk[-1]:
            return self._xk[-1].copy()
        return self._eval(self.t_end)

    def breakpoints(self) -> np.ndarray:
        """Knot positions (as ``s`` values) inside the window, endpoints included."""
        t0, t1 = self.t_end - self.r, self.t_end
        lo = np.searchsorted(self._tk, t0, side="right")
        hi = np.searchsorted(self._tk, t1, side="left")
        inner = self._tk[lo:hi]
        pts = [np.array([t0]), inner]
        if self._head is not None and self._tk[-1] < t1:
            pts.append(np.array([self._tk[-1]]))
        pts.append(np.array([t1]))
        return np.concatenate(pts) - self.t_end

    def quad(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """Integral over ``[-r, 0]`` of ``fn(s, X)`` where ``X[i] = x(s[i])``.

        Uses six-point Gauss-Legendre on every inter-knot piece, so smooth
        weights times squared cubics are integrated to rounding error.  Results
        are memoised per integrand object on this window.
        """
        cache = self._quad_cache
        if cache is not None and fn in cache:
            return cache[fn]
        val = self._quad_table(fn) if self._table is not None and self._head is None else None
        if val is None:
            val = self._quad_direct(fn)
        if cache is None:
            self._quad_cache = cache = {}
        cache[fn] = val
        return val

    def _quad_table(self, fn) -> float | None:
        # window endpoints on knots: reuse the shared node table
        tk = self._tk
        t1 = self.t_end
        t0 = t1 - self.r
        tol = 1e-9 * max(1.0, abs(t1))
        j0 = int(tk.searchsorted(t0 - tol))
        j1 = int(tk.searchsorted(t1 - tol))
        if j1 >= len(tk) or j0 >= j1 or abs(tk[j0] - t0) > tol or abs(tk[j1] - t1) > tol:
            return None
        tab = self._table
        tab.fill(j1)
        s = tab.t[j0:j1].ravel() - t1
        X = tab.x[j0:j1].reshape(-1, tab.x.shape[2])
        return float(np.dot(tab.w[j0:j1].ravel(), fn(s, X)))

    def _quad_direct(self, fn) -> float:
        bp = self.breakpoints()
        a, b = bp[:-1], bp[1:]
        width = b - a
        keep = width > 0
        a, width = a[keep], width[keep]
        s = (a[:, None] + width[:, None] * _GL_X[None, :]).ravel()
        w = (width[:, None] * _GL_W[None, :]).ravel()
        X = self._eval(self.t_end + s)
        return float(np.dot(w, fn(s, X)))

    def sup_norm(self, per_segment: int = 4) -> float:
        """Max of ``|x(s)|`` over knots and a dense grid inside each piece."""
        bp = self.breakpoints()
        frac = np.arange(per_segment) / per_segment
        s = (bp[:-1, None] + (bp[1:] - bp[:-1])[:, None] * frac[None, :]).ravel()
        s = np.append(s, 0.0)
        s = s[s >= -self.r]
        X = self._eval(self.t_end + s)
        return float(np.max(np.linalg.norm(X, axis=1)))

    def __repr__(self) -> str:
        return f"History(r={self.r}, t_end={self.t_end}, x(0)={self.current()})"
