"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class OutstabError(Exception):
    pass


class InputError(OutstabError, ValueError):
    """Bad arguments: wrong dimension, out-of-range time, unknown name."""


class NumericError(OutstabError, ArithmeticError):
    pass


class InfeasibleError(InputError):
    """A system's construction-time feasibility condition does not hold."""

    def __init__(self, condition: str, message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class DomainTooThinError(InputError):
    pass


class IntegrationError(OutstabError, RuntimeError):
    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last reached t={t_last:.6g})")
        self.t_last = t_last


class BlowUpError(IntegrationError):
    pass
