"""Input validation helpers shared by the public API."""

import numbers

import numpy as np

from .exceptions import DimensionMismatch, InvalidMatrix, RankOutOfRange


def check_matrix(A, name="X"):
    """Return ``A`` as a float64 2-D array, rejecting NaN/Inf and empty input."""
    try:
        A = np.asarray(A, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrix(f"{name} is not convertible to a real array: {exc}") from exc
    if A.ndim != 2:
        raise InvalidMatrix(f"{name} must be 2-D, got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidMatrix(f"{name} must have at least one row and one column, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix(f"{name} contains NaN or Inf")
    return A


def check_same_shape(X, D, names=("X", "Delta")):
    if X.shape != D.shape:
        raise DimensionMismatch(
            f"{names[0]} has shape {X.shape} but {names[1]} has shape {D.shape}"
        )


def check_rank(r, upper, inclusive=False):
    """Validate a truncation order ``1 <= r < upper`` (``<=`` if inclusive)."""
    if isinstance(r, bool) or not isinstance(r, numbers.Integral):
        raise RankOutOfRange(f"rank must be an integer, got {r!r}")
    r = int(r)
    ok = 1 <= r <= upper if inclusive else 1 <= r < upper
    if not ok:
        rel = "<=" if inclusive else "<"
        raise RankOutOfRange(f"rank must satisfy 1 <= r {rel} {upper}, got {r}")
    return r
