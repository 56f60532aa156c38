"""Exception hierarchy.  The CLI maps these onto exit codes."""


class LocalSignalError(Exception):
    """Base class for all errors raised by this package."""


class InputError(LocalSignalError, ValueError):
    """Malformed input or invalid configuration (CLI exit code 2)."""


class DegenerateInputError(LocalSignalError):
    """Data that cannot support the analysis, e.g. a constant series (exit code 1)."""


class UnsupportedShapeError(LocalSignalError, ValueError):
    """An operation was requested for a signal shape it does not apply to."""


class ThresholdError(LocalSignalError):
    """The requested level cannot be reached inside the search bracket."""


class ConvergenceError(LocalSignalError):
    """An iterative estimator failed to converge."""
