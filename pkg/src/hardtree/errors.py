"""Exception types shared across the package."""


class HardTreeError(Exception):
    """Base class for all package errors."""


class DomainError(HardTreeError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class StructuralError(HardTreeError, ValueError):
    """Inputs are mutually inconsistent (sizes, shapes, invalid configurations)."""


class CapacityError(HardTreeError):
    """The requested computation exceeds an enumeration/memory capacity limit."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class BudgetError(HardTreeError):
    """An iterative search or simulation exhausted its step budget."""


class ConsistencyError(HardTreeError):
    """An internal invariant failed (e.g. detailed balance violated)."""
