"""Exception hierarchy shared by the design, field and CLI layers."""


class InhibDesignError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(InhibDesignError, ValueError):
    """Invalid inputs or violated parameter constraints (e.g. k > n/2)."""

    exit_code = 2


class FeasibilityError(InhibDesignError):
    """A design cannot be constructed with the requested parameters."""

    exit_code = 3

    def __init__(self, message, packing_density=None):
        super().__init__(message)
        self.packing_density = packing_density


class NumericalError(InhibDesignError, ArithmeticError):
    """Factorization, mode-finding or other numerical failure."""

    exit_code = 4
