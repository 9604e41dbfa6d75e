"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument is outside the domain of an operation."""


class InfeasibleBudgetError(ValueError):
    """The occupancy budget cannot be met by any timer assignment."""


class ConfigurationError(ValueError):
    """A scenario or policy configuration is inconsistent or incomplete.

    ``key`` carries the dotted config key when one is known.
    """

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class IterationLimitError(RuntimeError):
    """An iterative solver did not converge within its iteration budget."""
