"""Numerical checks of Lyapunov-type output-stability conditions.

Modules: :mod:`systems` (catalog), :mod:`integrate` (ODE/DDE solvers),
:mod:`certificates` (hypothesis checks), :mod:`convergence` (time bounds,
sweeps, envelopes), :mod:`barbalat` (signal classification),
:mod:`adaptive` (adaptive-control closed loops), :mod:`cli`.
"""

from .errors import (BlowUpError, DomainTooThinError, InfeasibleError, InputError,
                     IntegrationError, NumericError, OutstabError)
from .history import History
from .systems import DelaySystem, OdeSystem, builtin, eval_field, list_systems, sample_domain
from .integrate import IntegratorConfig, Trajectory, dense_eval, integrate, integrate_dde, integrate_ode

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "DomainTooThinError",
    "InfeasibleError",
    "InputError",
    "IntegrationError",
    "NumericError",
    "OutstabError",
    "History",
    "DelaySystem",
    "OdeSystem",
    "builtin",
    "eval_field",
    "list_systems",
    "sample_domain",
    "IntegratorConfig",
    "Trajectory",
    "dense_eval",
    "integrate",
    "integrate_dde",
    "integrate_ode",
]
