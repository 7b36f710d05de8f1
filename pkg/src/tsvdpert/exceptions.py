"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`TSVDError`,
so callers can catch the whole family at once. Errors caused by bad caller
input additionally derive from :class:`ValueError`.
"""

import numpy as np


class TSVDError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(TSVDError, ValueError):
    """Input is not a finite, non-empty, two-dimensional real array."""


class DimensionMismatch(TSVDError, ValueError):
    """Operand shapes are incompatible."""


class RankOutOfRange(TSVDError, ValueError):
    """Truncation order outside the admissible range."""


class ParameterOutOfRange(TSVDError, ValueError):
    """A scalar parameter violates its documented range."""


class NumericalFailure(TSVDError, np.linalg.LinAlgError):
    """The underlying dense decomposition did not converge."""


class SingularTruncation(TSVDError):
    """The r-th singular value is numerically zero."""


class GapViolation(TSVDError):
    """The perturbation is too large for the spectral gap at the cut."""


class NonConvergence(TSVDError):
    """An iterative solve hit its iteration cap."""


class SingularAlignment(TSVDError):
    """Perturbed and unperturbed dominant subspaces are (nearly) orthogonal."""


class NotRankR(TSVDError, ValueError):
    """Base matrix has singular values beyond the truncation order."""


class DegenerateFit(TSVDError):
    """Too few usable points for a log-log slope fit."""


class GoldenMismatch(TSVDError, AssertionError):
    """A reproduced value disagrees with its stored golden value."""

    def __init__(self, message, diffs=None):
        super().__init__(message)
        self.diffs = diffs or {}
