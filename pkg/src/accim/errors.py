"""Exception types shared across the package."""


class AccimError(Exception):
    """Base class for all package errors."""


class DomainError(AccimError):
    """A point or interval lies outside the domain it was used with."""


class ConfigError(AccimError):
    """An experiment configuration failed to parse or validate."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateSystemError(AccimError):
    """The hole destroys the open system (e.g. swallows a whole branch)."""


class HypothesisFailureError(AccimError):
    """A construction precondition (expansion/hole-size/length-scale) fails."""


class TotalEscapeError(AccimError):
    """All mass leaves the system in one step; only the trivial measure exists."""


class ResolutionError(AccimError):
    """Too few samples survive to resolve the requested statistic."""


class ResourceBudgetError(AccimError):
    """A construction exceeded its cell/segment budget before reaching L_max."""


class FamilyValidationError(AccimError):
    """A hole family violates the nesting/endpoint conditions of a study."""
