"""Generalized eigenvector and CCA solvers built on inexact shift-and-invert deflation."""
from .errors import (ConditioningError, InputError, LazySpectraError, NonConvergenceError,
                     PreconditionError, ScheduleError, SolverError)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
