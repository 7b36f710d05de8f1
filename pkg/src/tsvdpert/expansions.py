"""Perturbation expansions of the r-truncated SVD.

The perturbed dominant subspaces of ``X + Delta`` are written in the bases of
the unperturbed ones through two coefficient matrices ``Q`` ((m-r) x r) and
``P`` ((n-r) x r). They satisfy the coupled quadratic equations::

    Q (S1 + E11) + (S2 + E22) P = -E21 - Q E12 P
    (S1 + E11) P^T + Q^T (S2 + E22) = E12 + Q^T E21 P^T

with ``E = U^T Delta V`` partitioned at the cut. This module solves them three
ways (fixed-point iteration, closed-form inversion from the perturbed SVD,
truncated series), builds the rotated bases, and evaluates the first- and
second-order expansions of the r-TSVD.

All ``Q``/``P`` live in the tall frame of the decomposition (see
:mod:`tsvdpert.linalg`); matrices passed in and returned are in the caller's
orientation.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import check_matrix, check_same_shape
from .exceptions import (
    GapViolation,
    NonConvergence,
    NotRankR,
    SingularAlignment,
)
from .linalg import (
    RANK_RTOL,
    _oriented_projectors,
    gap_check,
    pinv_rank_r,
    require_cut,
    unvec,
    vec,
)


class ExpansionWarning(UserWarning):
    """An expansion was evaluated outside the region where it is guaranteed."""


@dataclass(frozen=True)
class EBlocks:
    E11: np.ndarray
    E12: np.ndarray
    E21: np.ndarray
    E22: np.ndarray

    def frobenius_sq(self):
        return sum(float(np.sum(B * B)) for B in (self.E11, self.E12, self.E21, self.E22))


@dataclass(frozen=True)
class Rotations:
    Q: np.ndarray
    P: np.ndarray
    method: str
    iterations: int = 0
    eq7_residual: float = float("nan")


@dataclass(frozen=True)
class ExpansionResult:
    """Approximation of ``P_r(X + Delta)`` as ``base + sum(corrections)``."""

    approx: np.ndarray
    order: int
    base: np.ndarray
    corrections: dict = field(default_factory=dict)
    valid: bool = True

    @property
    def correction(self):
        """Everything beyond the base term."""
        return self.approx - self.base


def _delta(dec, Delta):
    D = dec.orient(check_matrix(Delta, "Delta"))
    check_same_shape(dec.matrix, D)
    return D


def _require_gap(dec, Delta, force=False):
    status = gap_check(dec, Delta)
    if status.satisfied:
        return True
    msg = (
        f"||Delta||_2 = {status.delta_spectral:.6g} is not below half the gap "
        f"{status.gap / 2:.6g}"
    )
    if not force:
        raise GapViolation(msg)
    warnings.warn(msg + "; result is outside its validity region", ExpansionWarning, stacklevel=3)
    return False


def partition_E(dec, Delta):
    """Blocks ``E_ij = U_i^T Delta V_j`` in the tall frame."""
    D = _delta(dec, Delta)
    return EBlocks(
        E11=dec.U1.T @ D @ dec.V1,
        E12=dec.U1.T @ D @ dec.V2,
        E21=dec.U2.T @ D @ dec.V1,
        E22=dec.U2.T @ D @ dec.V2,
    )


def eq7_defect(dec, E, Q, P):
    """Frobenius norm of the defects of both rotation equations."""
    A = dec.Sigma1 + E.E11
    B = dec.Sigma2 + E.E22
    da = Q @ A + B @ P + E.E21 + Q @ E.E12 @ P
    db = A @ P.T + Q.T @ B - E.E12 - Q.T @ E.E21 @ P.T
    return float(np.hypot(np.linalg.norm(da), np.linalg.norm(db)))


def rotations_exact(dec, Delta, tol=1e-13, max_iter=100):
    """Solve the rotation equations by fixed-point iteration.

    Each step freezes the quadratic terms at the previous iterate and solves
    the remaining linear system in ``(vec Q, vec P)`` exactly. Starts from
    ``Q = P = 0``; stops once successive iterates differ by less than ``tol``
    in Frobenius norm.
    """
    require_cut(dec)
    _require_gap(dec, Delta)
    E = partition_E(dec, Delta)
    r, mr, nr = dec.r, dec.m - dec.r, dec.n - dec.r
    A = dec.Sigma1 + E.E11
    B = dec.Sigma2 + E.E22
    # rows: vec of (Q A + B P) and of the transposed second equation (P A^T + B^T Q)
    K = np.block([
        [np.kron(A.T, np.eye(mr)), np.kron(np.eye(r), B)],
        [np.kron(np.eye(r), B.T), np.kron(A, np.eye(nr))],
    ])
    lu = scipy.linalg.lu_factor(K)
    nq = mr * r
    Q = np.zeros((mr, r))
    P = np.zeros((nr, r))
    for it in range(1, max_iter + 1):
        rhs = np.concatenate([
            vec(-E.E21 - Q @ E.E12 @ P),
            vec(E.E12.T + P @ E.E21.T @ Q),
        ])
        x = scipy.linalg.lu_solve(lu, rhs)
        Qn = unvec(x[:nq], (mr, r))
        Pn = unvec(x[nq:], (nr, r))
        step = np.hypot(np.linalg.norm(Qn - Q), np.linalg.norm(Pn - P))
        Q, P = Qn, Pn
        if step < tol:
            break
    else:
        raise NonConvergence(f"fixed-point solve did not settle in {max_iter} iterations (last step {step:.3e})")
    return Rotations(Q, P, "exact-fixed-point", it, eq7_defect(dec, E, Q, P))


def rotations_oracle(dec, dec_tilde, Delta=None, min_cos=1e-8):
    """Coefficient matrices read off directly from the perturbed decomposition.

    ``Q = -(U2^T Ut1)(U1^T Ut1)^{-1}`` and ``P = (V2^T Vt1)(V1^T Vt1)^{-1}``.
    If ``Delta`` is given, the defect of the rotation equations is reported.
    """
    require_cut(dec)
    if dec_tilde.r != dec.r or dec_tilde.matrix.shape != dec.matrix.shape:
        raise ValueError("decompositions must share truncation order and shape")
    CU = dec.U1.T @ dec_tilde.U1
    CV = dec.V1.T @ dec_tilde.V1
    for name, C in (("U", CU), ("V", CV)):
        smin = np.linalg.svd(C, compute_uv=False)[-1]
        if smin < min_cos:
            raise SingularAlignment(f"{name}1^T {name}~1 is singular (smallest cosine {smin:.3e})")
    Q = -np.linalg.solve(CU.T, (dec.U2.T @ dec_tilde.U1).T).T
    P = np.linalg.solve(CV.T, (dec.V2.T @ dec_tilde.V1).T).T
    res = float("nan")
    if Delta is not None:
        res = eq7_defect(dec, partition_E(dec, Delta), Q, P)
    return Rotations(Q, P, "oracle", 0, res)


def _series_kron(dec, E, order):
    r, mr, nr = dec.r, dec.m - dec.r, dec.n - dec.r
    S1, S2 = dec.Sigma1, dec.Sigma2
    S1sq = S1 @ S1
    Phi0 = np.kron(S1sq, np.eye(mr)) - np.kron(np.eye(r), S2 @ S2.T)
    # right-hand factor acts on vec(P), so the identity is (n - r) wide
    Psi0 = np.kron(S1sq, np.eye(nr)) - np.kron(np.eye(r), S2.T @ S2)
    mu1 = -vec(S2 @ E.E12.T + E.E21 @ S1)
    tau1 = vec(S2.T @ E.E21 + E.E12.T @ S1)
    q = np.linalg.solve(Phi0, mu1)
    p = np.linalg.solve(Psi0, tau1)
    if order == 2:
        Phi1 = np.kron(S1 @ E.E11.T + E.E11 @ S1, np.eye(mr)) - np.kron(
            np.eye(r), S2 @ E.E22.T + E.E22 @ S2.T
        )
        Psi1 = np.kron(S1 @ E.E11 + E.E11.T @ S1, np.eye(nr)) - np.kron(
            np.eye(r), S2.T @ E.E22 + E.E22.T @ S2
        )
        mu2 = -vec(E.E22 @ E.E12.T + E.E21 @ E.E11.T)
        tau2 = vec(E.E22.T @ E.E21 + E.E12.T @ E.E11)
        q = q + np.linalg.solve(Phi0, mu2 - Phi1 @ q)
        p = p + np.linalg.solve(Psi0, tau2 - Psi1 @ p)
    return unvec(q, (mr, r)), unvec(p, (nr, r))


def _series_closed(dec, E, order):
    Si = np.diag(1.0 / dec.sigma1)
    Q = -E.E21 @ Si
    P = E.E12.T @ Si
    if order == 2:
        Q = Q - E.E22 @ E.E12.T @ Si @ Si + E.E21 @ Si @ E.E11 @ Si
        P = P + E.E22.T @ E.E21 @ Si @ Si - E.E12.T @ Si @ E.E11.T @ Si
    return Q, P


def rotations_series(dec, Delta, order=2, path="auto"):
    """First- or second-order series for ``Q`` and ``P``.

    Parameters
    ----------
    order : {1, 2}
    path : {"auto", "kron", "closed"}
        ``"kron"`` solves the vectorized (Kronecker) form for a general base
        matrix; ``"closed"`` uses the explicit formulas valid when the trailing
        singular values vanish; ``"auto"`` picks ``"closed"`` for rank-r bases.
    """
    require_cut(dec)
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    _require_gap(dec, Delta)
    E = partition_E(dec, Delta)
    if path == "auto":
        path = "closed" if dec.is_rank_r() else "kron"
    if path == "closed":
        if not dec.is_rank_r():
            raise NotRankR("closed-form series needs vanishing trailing singular values")
        Q, P = _series_closed(dec, E, order)
    elif path == "kron":
        Q, P = _series_kron(dec, E, order)
    else:
        raise ValueError(f"unknown path {path!r}")
    return Rotations(Q, P, f"series-{order}", 0, eq7_defect(dec, E, Q, P))


def _inv_sqrt_spd(M):
    w, Z = np.linalg.eigh(M)
    return (Z / np.sqrt(w)) @ Z.T


def rotated_bases(dec, rot):
    """Orthonormal bases of the perturbed subspaces built from ``Q`` and ``P``.

    Returns ``(U1_hat, U2_hat, V1_hat, V2_hat)`` in the tall frame.
    """
    Q, P = rot.Q, rot.P
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(P))):
        raise ValueError("rotation coefficients must be finite")
    r = dec.r
    U1h = (dec.U1 - dec.U2 @ Q) @ _inv_sqrt_spd(np.eye(r) + Q.T @ Q)
    U2h = (dec.U2 + dec.U1 @ Q.T) @ _inv_sqrt_spd(np.eye(dec.m - r) + Q @ Q.T)
    V1h = (dec.V1 + dec.V2 @ P) @ _inv_sqrt_spd(np.eye(r) + P.T @ P)
    V2h = (dec.V2 - dec.V1 @ P.T) @ _inv_sqrt_spd(np.eye(dec.n - r) + P @ P.T)
    return U1h, U2h, V1h, V2h


def projector_delta_first_order(dec, rot):
    """Linear models of the changes in the trailing-subspace projectors.

    Returns ``(dPU2, dPV2)`` in the tall frame.
    """
    dPU2 = dec.U1 @ rot.Q.T @ dec.U2.T + dec.U2 @ rot.Q @ dec.U1.T
    dPV2 = -dec.V1 @ rot.P.T @ dec.V2.T - dec.V2 @ rot.P @ dec.V1.T
    return dPU2, dPV2


def _check_simple_cut(dec):
    require_cut(dec)
    if dec.gap <= 0 or dec.tie:
        raise GapViolation(
            f"sigma_r = {dec.sigma1[-1]:.6g} must exceed sigma_(r+1) = {dec.sigma2[0]:.6g}"
        )


def double_sum(dec, Delta):
    """Curvature term of the first-order expansion about a matrix of rank > r.

    Direct sum over pairs (i <= r < j <= n); pairs with ``sigma_j = 0``
    contribute nothing and are skipped.
    """
    D = _delta(dec, Delta)
    U, V = dec.U, dec.V
    s = dec.sigma
    G = np.zeros_like(D)
    tol = RANK_RTOL * dec.scale
    for j in range(dec.r, dec.n):
        sj = s[j]
        if sj <= tol:
            continue
        uj, vj = U[:, j], V[:, j]
        for i in range(dec.r):
            si = s[i]
            ui, vi = U[:, i], V[:, i]
            den = si * si - sj * sj
            a = sj * sj / den
            b = si * sj / den
            # u_i u_i^T D v_j v_j^T + u_j u_j^T D v_i v_i^T
            G += a * ((ui @ D @ vj) * np.outer(ui, vj) + (uj @ D @ vi) * np.outer(uj, vi))
            # u_i v_i^T D^T u_j v_j^T + u_j v_j^T D^T u_i v_i^T
            G += b * ((uj @ D @ vi) * np.outer(ui, vj) + (ui @ D @ vj) * np.outer(uj, vi))
    return dec.orient(G)


def tsvd_first_order(dec, Delta, force=False):
    """First-order expansion of ``P_r(X + Delta)`` about a matrix with a gap at r."""
    _check_simple_cut(dec)
    valid = _require_gap(dec, Delta, force)
    D = _delta(dec, Delta)
    _, PU2, _, PV2 = _oriented_projectors(dec)
    base = dec.U1 @ (dec.sigma1[:, None] * dec.V1.T)
    lin = D - PU2 @ D @ PV2
    G = dec.orient(double_sum(dec, dec.orient(D)))
    approx = base + lin + G
    o = dec.orient
    return ExpansionResult(
        approx=o(approx),
        order=1,
        base=o(base),
        corrections={"delta_term": o(lin), "double_sum": o(G)},
        valid=valid,
    )


def feppon_derivative(dec, Delta):
    """Directional derivative of the r-TSVD at ``X`` in direction ``Delta``.

    Independent closed form of the linear part of :func:`tsvd_first_order`,
    grouped by the pair ``(u_j v_i^T, u_i v_j^T)`` with prefactor
    ``sigma_j / (sigma_i^2 - sigma_j^2)``; the inner sum runs over all m left
    indices with zero ("ghost") singular values beyond n, whose terms vanish.
    """
    _check_simple_cut(dec)
    D = _delta(dec, Delta)
    PU1, PU2, PV1, _ = _oriented_projectors(dec)
    out = PU2 @ D @ PV1 + PU1 @ D
    U, V, s = dec.U, dec.V, dec.sigma
    for j in range(dec.r, dec.m):
        if j >= dec.n:
            continue  # ghost value sigma_j = 0: the prefactor kills the term
        sj = s[j]
        if sj == 0.0:
            continue
        uj, vj = U[:, j], V[:, j]
        for i in range(dec.r):
            si = s[i]
            ui, vi = U[:, i], V[:, i]
            c = sj / (si * si - sj * sj)
            a = uj @ D @ vi
            b = ui @ D @ vj
            # sigma_i and sigma_j are placed so that the sum reproduces a central
            # difference of P_r; the transposed placement is not the derivative
            out += c * ((sj * a + si * b) * np.outer(uj, vi) + (si * a + sj * b) * np.outer(ui, vj))
    return dec.orient(out)


def _require_rank_r(dec, Delta, force):
    require_cut(dec)
    if not dec.is_rank_r():
        raise NotRankR(
            f"base matrix is not rank {dec.r}: sigma_(r+1) = {dec.sigma2[0]:.3e}"
        )
    D = _delta(dec, Delta)
    spec = float(np.linalg.norm(D, 2))
    if spec < dec.sigma1[-1] / 2:
        return True
    msg = f"||Delta||_2 = {spec:.6g} is not below sigma_r / 2 = {dec.sigma1[-1] / 2:.6g}"
    if not force:
        raise GapViolation(msg)
    warnings.warn(msg + "; result is outside its validity region", ExpansionWarning, stacklevel=3)
    return False


def _rank_r_linear(dec, D):
    _, PU2, _, PV2 = _oriented_projectors(dec)
    return D - PU2 @ D @ PV2


def tsvd_first_order_rank_r(dec, Delta, force=False):
    """First-order expansion ``X + Delta - P_U2 Delta P_V2`` about a rank-r ``X``."""
    valid = _require_rank_r(dec, Delta, force)
    lin = _rank_r_linear(dec, _delta(dec, Delta))
    o = dec.orient
    return ExpansionResult(
        approx=o(dec.matrix + lin),
        order=1,
        base=o(dec.matrix),
        corrections={"delta_term": o(lin)},
        valid=valid,
    )


def second_order_terms(dec, Delta):
    """The three quadratic terms of the rank-r expansion, caller orientation."""
    D = _delta(dec, Delta)
    _, PU2, _, PV2 = _oriented_projectors(dec)
    Xd = dec.orient(pinv_rank_r(dec))
    B = PU2 @ D @ PV2
    o = dec.orient
    return {
        "pinv_left": o(Xd @ D.T @ B),
        "pinv_right": o(B @ D.T @ Xd),
        "pinv_middle": o(PU2 @ D @ Xd.T @ D @ PV2),
    }


def tsvd_second_order_rank_r(dec, Delta, force=False):
    """Second-order expansion of ``P_r(X + Delta)`` about a rank-r ``X``."""
    valid = _require_rank_r(dec, Delta, force)
    o = dec.orient
    corrections = {"delta_term": o(_rank_r_linear(dec, _delta(dec, Delta)))}
    corrections.update(second_order_terms(dec, Delta))
    base = o(dec.matrix)
    return ExpansionResult(
        approx=base + sum(corrections.values()),
        order=2,
        base=base,
        corrections=corrections,
        valid=valid,
    )
