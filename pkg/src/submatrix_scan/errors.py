"""Exception types raised by the package."""


class ParameterDomainError(ValueError):
    """A distribution parameter lies outside its admissible range."""


class ConfigError(ValueError):
    """Inconsistent or infeasible configuration (sizes, keys, options)."""


class EnumerationTooLargeError(RuntimeError):
    """Exhaustive enumeration would exceed the configured cap."""


class MatrixParseError(ValueError):
    """A matrix file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConvergenceError(RuntimeError):
    """Hill-climbing did not reach a fixed point within the iteration cap."""
