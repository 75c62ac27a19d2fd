"""Shared exception types."""


class ConfigurationError(ValueError):
    """Bad parameters, mismatched shapes/grids, malformed config files."""


class NumericalError(RuntimeError):
    """A solver failed to meet its accuracy contract (residuals, symmetry)."""


class SuiteFailure(RuntimeError):
    """An inequality/verification suite reported violations."""
