"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LazySpectraError(Exception):
    exit_code = 1
    reason = "error"


class InputError(LazySpectraError):
    exit_code = 2
    reason = "input"


class FormatError(InputError):
    reason = "format"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(InputError):
    reason = "dimension"


class DataValueError(InputError, ValueError):
    reason = "value"


class SolverError(LazySpectraError):
    exit_code = 3
    reason = "solver"


class NonConvergenceError(SolverError):
    reason = "nonconvergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConditioningError(SolverError):
    reason = "conditioning"


class ScheduleError(SolverError):
    """Shift schedule exhausted its round cap (leading eigenvalue collapsed)."""

    reason = "schedule"


class AccuracyError(SolverError):
    reason = "accuracy"


class PreconditionError(LazySpectraError):
    exit_code = 4
    reason = "precondition"
