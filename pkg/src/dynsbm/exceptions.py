"""Exception hierarchy for dynsbm."""


class DynSBMError(Exception):
    """Base class for all errors raised by dynsbm."""


class InvalidAssignmentError(DynSBMError, ValueError):
    """A class assignment is inconsistent with its snapshot or has empty classes."""


class DegenerateBlockError(DynSBMError, ValueError):
    """A diagonal block has fewer than two members, so it has no possible edges."""


class ConfigurationError(DynSBMError, ValueError):
    """Invalid hyperparameters or run configuration."""


class DimensionError(DynSBMError, ValueError):
    """Array shapes do not agree."""


class NumericalFailureError(DynSBMError, ArithmeticError):
    """A factorization or normalization failed even after the fallback path."""


class ParseError(DynSBMError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(DynSBMError, ValueError):
    """A metric is undefined for the given input (e.g. AUC with a single class)."""
