"""Exceptions with CLI exit-code semantics."""

__all__ = ["InputError", "BudgetExhausted"]


class InputError(ValueError):
    """Malformed user input (CLI exit code 2)."""


class BudgetExhausted(RuntimeError):
    """An iteration or time budget ran out before the target was certified
    (CLI exit code 3).  Carries the best value found so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
