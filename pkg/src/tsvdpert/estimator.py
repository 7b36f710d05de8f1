"""scikit-learn style wrapper around the expansions.

``fit`` takes the base matrix ``X`` and caches its decomposition; ``transform``
takes a perturbation ``Delta`` of the same shape and returns the expansion of
``P_r(X + Delta)``. Unlike a usual transformer the "samples" are whole
matrices, so ``transform`` accepts exactly one matrix at a time.
"""

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_rank, check_same_shape
from .exceptions import NotRankR, ParameterOutOfRange
from .expansions import (
    ExpansionWarning,
    tsvd_first_order,
    tsvd_first_order_rank_r,
    tsvd_second_order_rank_r,
)
from .linalg import subspace_decompose, tsvd


class TSVDExpansion(TransformerMixin, BaseEstimator):
    """Perturbation expansion of the r-truncated SVD about a fixed matrix.

    Parameters
    ----------
    rank : int, default=1
        Truncation order ``r``; must satisfy ``1 <= r < min(X.shape)``.
    order : {1, 2}, default=1
        Expansion order. Order 2 needs ``X`` of rank ``r``.
    force : bool, default=False
        Evaluate outside the validity region (with an ``ExpansionWarning``)
        instead of raising ``GapViolation``.

    Attributes
    ----------
    decomposition_ : SubspaceDecomposition
    singular_values_ : ndarray
    rank_r_ : bool
        Whether the fitted matrix has rank ``r`` within tolerance.
    truncation_ : ndarray
        ``P_r(X)``.
    n_features_in_ : int
    """

    def __init__(self, rank=1, order=1, force=False):
        self.rank = rank
        self.order = order
        self.force = force

    def fit(self, X, y=None):
        X = check_matrix(X)
        check_rank(self.rank, min(X.shape))
        if self.order not in (1, 2):
            raise ParameterOutOfRange(f"order must be 1 or 2, got {self.order!r}")
        dec = subspace_decompose(X, self.rank)
        if self.order == 2 and not dec.is_rank_r():
            raise NotRankR(f"order 2 needs a rank-{self.rank} matrix")
        self.decomposition_ = dec
        self.singular_values_ = dec.sigma.copy()
        self.rank_r_ = dec.is_rank_r()
        self.truncation_ = tsvd(X, self.rank)
        self.X_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Expansion of ``P_r(X_fit + Delta)`` for the perturbation ``X``."""
        check_is_fitted(self, "decomposition_")
        D = check_matrix(X, "Delta")
        check_same_shape(self.X_, D)
        dec = self.decomposition_
        if self.order == 2:
            res = tsvd_second_order_rank_r(dec, D, force=self.force)
        elif self.rank_r_:
            res = tsvd_first_order_rank_r(dec, D, force=self.force)
        else:
            res = tsvd_first_order(dec, D, force=self.force)
        return res.approx

    def correction(self, Delta):
        """The expansion minus ``P_r(X)``."""
        return self.transform(Delta) - self.truncation_

    def score(self, X, y=None):
        """Negative Frobenius error of the expansion against the exact truncation."""
        check_is_fitted(self, "decomposition_")
        D = check_matrix(X, "Delta")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExpansionWarning)
            approx = self.transform(D)
        return -float(np.linalg.norm(tsvd(self.X_ + D, self.rank) - approx))
