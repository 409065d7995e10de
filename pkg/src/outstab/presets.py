"""Ready-made certificates for the catalog systems, selected by name."""

from __future__ import annotations

import math
from typing import Callable


from .certificates import Certificate, ComparisonFn, ScalarField
from .errors import InputError
from .history import History
from .systems import weighted_square

__all__ = ["PRESETS", "preset", "list_presets", "example2_derivatives"]


def _decoupled_thm1(sys) -> Certificate:
    half_sq = ScalarField(lambda x: 0.5 * x[0] ** 2, lambda x: -x[0] ** 2, name="y^2/2")
    return Certificate("thm1", V=half_sq, W=half_sq, rho=ComparisonFn.linear(2.0),
                       a=ComparisonFn.quadratic(0.5), name="decoupled-thm1")


def _decoupled_prop1(sys) -> Certificate:
    W = ScalarField(lambda x: 0.5 * x[0] ** 2, lambda x: -x[0] ** 2, name="y^2/2")
    return Certificate("prop1", W=W, a=ComparisonFn.quadratic(0.5), b=ComparisonFn.quadratic(1.0),
                       name="decoupled-prop1")


def _example1_fields(sys):
    g = sys.info["g_fn"]

    def V(x):
        y, z, _ = x
        return 0.5 * y * y + z * z / (1.0 + z * z)

    def dV(x):
        y, _, w = x
        return -(1.0 + w * w) * y * y

    def dW(x):
        y, z, w = x
        return -(1.0 + w * w) * y * y + 2.0 * z * g(z, w) * y / (1.0 + z * z) ** 2

    return (ScalarField(V, dV, name="y^2/2 + z^2/(1+z^2)"),
            ScalarField(lambda x: 0.5 * x[0] ** 2, dW, name="y^2/2"))


def _example1_thm2(sys, gamma_value: float | None = None) -> Certificate:
    V, W = _example1_fields(sys)
    bound = sys.info["g_bound"]
    gamma = bound * bound / 4.0 if gamma_value is None else gamma_value
    return Certificate("thm2", V=V, W=W, rho=ComparisonFn.linear(2.0), a=ComparisonFn.quadratic(0.5),
                       b=ComparisonFn.quadratic(1.0), gamma=ComparisonFn.constant(gamma),
                       which_side="upper", name="example1-thm2")


def _example1_w_as_thm1(sys) -> Certificate:
    V, W = _example1_fields(sys)
    return Certificate("thm1", V=V, W=W, rho=ComparisonFn.linear(2.0), a=ComparisonFn.quadratic(0.5),
                       name="example1-w-as-thm1")


def example2_derivatives(p: float, q: float, Q: float, K: float, sigma: float, r: float,
                         g: Callable[[float, float], float]):
    """Closed-form right derivatives of the two functionals along solutions.

    Both follow from differentiating the weighted integral of ``x1^2`` over
    the moving window: ``d/dt = x1(0)^2 - e^{-sigma r} x1(-r)^2 - sigma * (weighted integral)``.
    """
    decay = math.exp(-sigma * r)
    integrand = weighted_square(float(sigma))

    def parts(h: History):
        x1, x2 = h.current()
        x1d = h.query(-r)[0]
        weighted = h.quad(integrand)
        return x1, x2, x1d, weighted

    def dV(h: History) -> float:
        x1, _, x1d, weighted = parts(h)
        return -(p - Q) * x1 * x1 + q * x1 * x1d - Q * decay * x1d * x1d - sigma * Q * weighted

    def dW(h: History) -> float:
        x1, x2, x1d, weighted = parts(h)
        return (-(p + g(x1, x2) * x2 - K) * x1 * x1 + q * x1 * x1d - K * decay * x1d * x1d
                - sigma * K * weighted)

    return dV, dW


def _example2_cor1(sys) -> Certificate:
    pr = sys.params
    feas = sys.info["feasibility"]
    if sys.info["V"] is None:
        raise InputError("example2 certificate needs lambda < p - Q")
    dV, dW = example2_derivatives(pr["p"], pr["q"], pr["Q"], feas["K"], pr["sigma"], pr["r"],
                                  sys.info["g_fn"])
    slope = 2.0 * (pr["p"] - pr["Q"] - feas["lambda"])
    return Certificate("cor1", V=ScalarField(sys.info["V"], dV, name="V"),
                       W=ScalarField(sys.info["W"], dW, name="W"),
                       rho=ComparisonFn.linear(slope), a=ComparisonFn.quadratic(0.5),
                       name="example2-cor1")


def _example2_prop1(sys) -> Certificate:
    pr = sys.params
    if sys.info["V"] is None:
        raise InputError("example2 certificate needs lambda < p - Q")
    feas = sys.info["feasibility"]
    dV, _ = example2_derivatives(pr["p"], pr["q"], pr["Q"], feas["K"], pr["sigma"], pr["r"],
                                 sys.info["g_fn"])
    return Certificate("prop1", W=ScalarField(sys.info["V"], dV, name="V"),
                       a=ComparisonFn.quadratic(0.5), b=ComparisonFn.quadratic(pr["Q"] + 0.5),
                       name="example2-prop1")


def _adaptive_thm3(sys) -> Certificate:
    from .adaptive import thm3_certificate

    if "plant" not in sys.info:
        raise InputError(f"{sys.name} is not an adaptive closed loop")
    return thm3_certificate(sys.info["plant"], sys.info["config"])


PRESETS = {
    "decoupled-thm1": ("decoupled_linear", _decoupled_thm1),
    "decoupled-prop1": ("decoupled_linear", _decoupled_prop1),
    "example1-thm2": ("example1", _example1_thm2),
    "example1-thm2-gamma0": ("example1", lambda s: _example1_thm2(s, 0.0)),
    "example1-w-as-thm1": ("example1", _example1_w_as_thm1),
    "example2-cor1": ("example2", _example2_cor1),
    "example2-prop1": ("example2", _example2_prop1),
    "adaptive-thm3": ("adaptive_redesigned", _adaptive_thm3),
}


def list_presets() -> list[dict[str, str]]:
    return [{"name": k, "system": v[0]} for k, v in PRESETS.items()]


def preset(name: str, sys) -> Certificate:
    """Build the named certificate for an already constructed system."""
    if name not in PRESETS:
        raise InputError(f"unknown certificate preset {name!r}; known: {', '.join(PRESETS)}")
    expected, build = PRESETS[name]
    if sys.name != expected:
        raise InputError(f"preset {name!r} is written for {expected}, not {sys.name}")
    return build(sys)
