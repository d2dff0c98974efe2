"""Exception hierarchy shared by all modules."""

import numpy as np


class EigRefineError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(EigRefineError, ValueError):
    """Operands are not conformable."""


class SingularMatrixError(EigRefineError, np.linalg.LinAlgError):
    """A matrix is singular to working precision."""


class DivisionHazardError(EigRefineError, ZeroDivisionError):
    """Two shifted eigenvalues coincide outside any suppressed block.

    The caller should have routed the step through the cluster path.
    """


class NonFiniteError(EigRefineError, FloatingPointError):
    """A refinement quantity became inf or nan."""


class StabilizationError(EigRefineError):
    """A projected cluster block could not be diagonalized."""


class MatrixMarketError(EigRefineError, ValueError):
    """Malformed or unsupported Matrix Market input."""


class InitializationError(EigRefineError):
    """The initial eigensolver adapter failed."""


class ExperimentError(EigRefineError, ValueError):
    """An experiment specification is invalid or cannot be run."""
