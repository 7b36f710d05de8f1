"""Dense real-matrix primitives for singular value truncation.

Full SVD with a reproducible basis convention, the split of the SVD at a
truncation order ``r`` into dominant and residual blocks, the associated
orthogonal projectors, the r-truncated SVD itself, the rank-r pseudo inverse,
and a handful of checks (spectral gap, Weyl/Mirsky margins, vec/Kronecker
identity).

Convention: all decompositions work on a *tall* matrix (``m >= n``). A wide
input is transposed internally; :class:`SubspaceDecomposition` records this in
``transposed`` and every public function taking a decomposition accepts and
returns matrices in the caller's original orientation.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from ._validation import check_matrix, check_rank, check_same_shape
from .exceptions import DimensionMismatch, NumericalFailure, SingularTruncation

#: singular values at or below ``RANK_RTOL * sigma_1`` count as zero
RANK_RTOL = 1e-14
#: neighbouring singular values within ``TIE_RTOL * sigma_1`` count as tied
TIE_RTOL = 1e-12
_SIGN_ATOL = 1e-12


class SvdFactors(NamedTuple):
    """``X = U @ diag(sigma) @ V.T`` with square orthogonal ``U`` and ``V``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Split of the SVD of a tall matrix at truncation order ``r``.

    Attributes
    ----------
    r : int
    U1, U2 : ndarray, shapes (m, r) and (m, m - r)
    sigma1, sigma2 : ndarray, lengths r and n - r
    V1, V2 : ndarray, shapes (n, r) and (n, n - r)
    matrix : ndarray, shape (m, n)
        The (oriented, tall) matrix that was decomposed.
    transposed : bool
        True when the caller passed the transpose of ``matrix``.
    tie : bool
        True when ``sigma_r`` and ``sigma_{r+1}`` are numerically equal and
        positive, i.e. the split (and the r-TSVD) is not unique.
    """

    r: int
    U1: np.ndarray
    U2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    matrix: np.ndarray
    transposed: bool = False
    tie: bool = False

    @property
    def m(self):
        return self.U1.shape[0]

    @property
    def n(self):
        return self.V1.shape[0]

    @property
    def U(self):
        return np.hstack([self.U1, self.U2])

    @property
    def V(self):
        return np.hstack([self.V1, self.V2])

    @property
    def sigma(self):
        return np.concatenate([self.sigma1, self.sigma2])

    @property
    def Sigma1(self):
        return np.diag(self.sigma1)

    @property
    def Sigma2(self):
        """(m - r) x (n - r) rectangular diagonal block."""
        S = np.zeros((self.m - self.r, self.n - self.r))
        k = len(self.sigma2)
        S[:k, :k] = np.diag(self.sigma2)
        return S

    @property
    def gap(self):
        s_next = self.sigma2[0] if len(self.sigma2) else 0.0
        return float(self.sigma1[-1] - s_next)

    @property
    def scale(self):
        return float(self.sigma1[0]) if len(self.sigma1) else 0.0

    def is_rank_r(self):
        """True if every trailing singular value is below the rank tolerance."""
        if not len(self.sigma2):
            return True
        return bool(np.all(self.sigma2 <= RANK_RTOL * max(self.scale, np.finfo(float).tiny)))

    def orient(self, A):
        """Map a caller-oriented matrix into the tall frame (and back)."""
        return A.T if self.transposed else A


@dataclass(frozen=True)
class ProjectorSet:
    PU1: np.ndarray
    PU2: np.ndarray
    PV1: np.ndarray
    PV2: np.ndarray


@dataclass(frozen=True)
class GapStatus:
    gap: float
    delta_spectral: float
    delta_frobenius: float
    satisfied: bool
    midpoint: float
    #: whether the perturbed sigma_r, sigma_{r+1} straddle ``midpoint``;
    #: None when the condition is not satisfied (nothing is claimed then)
    bracketed: bool | None = None


@dataclass(frozen=True)
class WeylMirskyMargins:
    weyl_lhs: float
    weyl_rhs: float
    mirsky_lhs: float
    mirsky_rhs: float

    @property
    def weyl_margin(self):
        return self.weyl_rhs - self.weyl_lhs

    @property
    def mirsky_margin(self):
        return self.mirsky_rhs - self.mirsky_lhs


# ---------------------------------------------------------------------------
# SVD
# ---------------------------------------------------------------------------


def _tie_groups(sigma, atol):
    """Runs of consecutive indices whose singular values are within ``atol``."""
    groups, start = [], 0
    for i in range(1, len(sigma) + 1):
        if i == len(sigma) or sigma[i - 1] - sigma[i] > atol:
            if i - start > 1:
                groups.append(list(range(start, i)))
            start = i
    return groups


def _canonical_basis(B):
    """Orthonormal basis of span(B) built from projected coordinate vectors.

    Depends only on the subspace, not on the basis ``B`` handed in.
    """
    P = B @ B.T
    k = B.shape[1]
    chosen = []
    for j in range(P.shape[0]):
        w = P[:, j].copy()
        for _ in range(2):
            for c in chosen:
                w -= (c @ w) * c
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            chosen.append(w / nrm)
            if len(chosen) == k:
                break
    return np.column_stack(chosen)


def _first_sign(x):
    idx = np.flatnonzero(np.abs(x) > _SIGN_ATOL)
    if idx.size == 0:
        return 1.0
    return 1.0 if x[idx[0]] >= 0 else -1.0


def full_svd(X):
    """Full SVD with a reproducible basis.

    Within every group of tied positive singular values the right singular
    vectors are replaced by a canonical basis of their span (the left ones are
    rotated along), and each pair ``(u_i, v_i)`` is sign-flipped so that the
    first nonzero entry of ``u_i`` is nonnegative. Only basis-invariant
    quantities should ever be compared across builds.

    Returns
    -------
    SvdFactors
        ``U`` (m, m), ``sigma`` (min(m, n),) descending, ``V`` (n, n).
    """
    X = check_matrix(X)
    try:
        U, s, Vh = np.linalg.svd(X, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    V = Vh.T.copy()
    k = len(s)
    atol = TIE_RTOL * (s[0] if k else 0.0)
    for g in _tie_groups(s, atol):
        if s[g[0]] <= RANK_RTOL * s[0]:
            continue
        Vg = V[:, g]
        W = Vg.T @ _canonical_basis(Vg)
        a, _, b = np.linalg.svd(W)
        W = a @ b
        V[:, g] = Vg @ W
        U[:, g] = U[:, g] @ W
    for i in range(k):
        f = _first_sign(U[:, i])
        U[:, i] *= f
        V[:, i] *= f
    for i in range(k, U.shape[1]):
        U[:, i] *= _first_sign(U[:, i])
    for i in range(k, V.shape[1]):
        V[:, i] *= _first_sign(V[:, i])
    return SvdFactors(U, s, V)


def subspace_decompose(X, r):
    """Split the SVD of ``X`` at order ``r``.

    ``r`` may equal ``min(m, n)`` (empty trailing blocks) so that the rank-r
    pseudo inverse of a full-rank matrix can be formed; operations that need a
    cut check ``r < min(m, n)`` themselves.
    """
    X = check_matrix(X)
    transposed = X.shape[0] < X.shape[1]
    Xo = X.T if transposed else X
    m, n = Xo.shape
    r = check_rank(r, n, inclusive=True)
    U, s, V = full_svd(Xo)
    tie = False
    if r < n:
        tie = bool(s[r - 1] > RANK_RTOL * s[0] and s[r - 1] - s[r] <= TIE_RTOL * s[0])
    return SubspaceDecomposition(
        r=r,
        U1=U[:, :r],
        U2=U[:, r:],
        sigma1=s[:r].copy(),
        sigma2=s[r:].copy(),
        V1=V[:, :r],
        V2=V[:, r:],
        matrix=Xo,
        transposed=transposed,
        tie=tie,
    )


def require_cut(dec):
    """Raise unless the decomposition has a nonempty trailing block."""
    check_rank(dec.r, dec.n)


def _oriented_projectors(dec):
    return (
        dec.U1 @ dec.U1.T,
        dec.U2 @ dec.U2.T,
        dec.V1 @ dec.V1.T,
        dec.V2 @ dec.V2.T,
    )


def projectors(dec):
    """Orthogonal projectors onto the four singular subspaces (caller orientation)."""
    PU1, PU2, PV1, PV2 = _oriented_projectors(dec)
    if dec.transposed:
        PU1, PU2, PV1, PV2 = PV1, PV2, PU1, PU2
    return ProjectorSet(PU1, PU2, PV1, PV2)


def tsvd(X, r, return_tie=False):
    """r-truncated SVD ``U1 Sigma1 V1^T`` of ``X``.

    When ``sigma_r == sigma_{r+1}`` the result is one valid truncation (the
    canonical one of :func:`full_svd`); pass ``return_tie=True`` to also get
    the non-uniqueness flag.
    """
    X = check_matrix(X)
    check_rank(r, min(X.shape))
    dec = subspace_decompose(X, r)
    out = dec.orient(dec.U1 @ (dec.sigma1[:, None] * dec.V1.T))
    return (out, dec.tie) if return_tie else out


def tsvd_candidates(X, r):
    """All truncations obtainable by picking ``r`` vectors from the canonical basis.

    Only tied groups straddling the cut give more than one candidate; the
    first entry is the one :func:`tsvd` returns.
    """
    X = check_matrix(X)
    check_rank(r, min(X.shape))
    Xo = X.T if X.shape[0] < X.shape[1] else X
    U, s, V = full_svd(Xo)
    atol = TIE_RTOL * s[0]
    group = [r - 1]
    if s[r - 1] > RANK_RTOL * s[0]:
        for g in _tie_groups(s, atol):
            if g[0] <= r - 1 < g[-1]:
                group = g
    fixed = [i for i in range(r) if i < group[0]]
    need = r - len(fixed)
    out = []
    for pick in combinations(group, need):
        idx = fixed + list(pick)
        T = U[:, idx] @ (s[idx][:, None] * V[:, idx].T)
        out.append(T.T if Xo is not X else T)
    return out


def pinv_rank_r(dec):
    """Rank-r pseudo inverse ``U1 Sigma1^{-1} V1^T`` (same shape as ``X``).

    With this convention ``X @ Xdag.T`` is the projector onto the dominant
    left subspace and ``X.T @ Xdag`` the one onto the dominant right subspace.
    """
    if dec.sigma1[-1] <= RANK_RTOL * dec.scale:
        raise SingularTruncation(
            f"sigma_r = {dec.sigma1[-1]:.3e} is numerically zero (sigma_1 = {dec.scale:.3e})"
        )
    return dec.orient(dec.U1 @ (dec.V1 / dec.sigma1).T)


def gap_check(dec, Delta):
    """Evaluate the sufficient condition ``||Delta||_2 < (sigma_r - sigma_{r+1}) / 2``."""
    require_cut(dec)
    D = dec.orient(check_matrix(Delta, "Delta"))
    check_same_shape(dec.matrix, D)
    gap = dec.gap
    s_next = dec.sigma2[0]
    spec = float(np.linalg.norm(D, 2))
    fro = float(np.linalg.norm(D))
    midpoint = float(dec.sigma1[-1] + s_next) / 2
    satisfied = spec < gap / 2
    bracketed = None
    if satisfied:
        st = np.linalg.svd(dec.matrix + D, compute_uv=False)
        bracketed = bool(st[dec.r] < midpoint < st[dec.r - 1])
    return GapStatus(gap, spec, fro, satisfied, midpoint, bracketed)


def weyl_mirsky_margins(X, Delta):
    """Left- and right-hand sides of the Weyl and Mirsky singular value bounds."""
    X = check_matrix(X)
    D = check_matrix(Delta, "Delta")
    check_same_shape(X, D)
    s = np.linalg.svd(X, compute_uv=False)
    st = np.linalg.svd(X + D, compute_uv=False)
    diff = st - s
    return WeylMirskyMargins(
        weyl_lhs=float(np.max(np.abs(diff))),
        weyl_rhs=float(np.linalg.norm(D, 2)),
        mirsky_lhs=float(np.linalg.norm(diff)),
        mirsky_rhs=float(np.linalg.norm(D)),
    )


def vec(A):
    """Column-stacking vectorization."""
    return np.asarray(A).reshape(-1, order="F")


def unvec(v, shape):
    return np.asarray(v).reshape(shape, order="F")


def kron_vec_identity_check(A, B, C, rtol=1e-12):
    """Check ``vec(A B C) == kron(C^T, A) vec(B)``.

    Returns
    -------
    ok : bool
    residual : float
        ``||lhs - rhs|| / max(1, ||lhs||)``.
    """
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    if A.shape[1] != B.shape[0] or B.shape[1] != C.shape[0]:
        raise DimensionMismatch(
            f"cannot form A B C with shapes {A.shape}, {B.shape}, {C.shape}"
        )
    lhs = vec(A @ B @ C)
    rhs = np.kron(C.T, A) @ vec(B)
    res = float(np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(lhs)))
    return res <= rtol, res
