"""Residual of the rank-r first-order expansion and its error bounds.

For a rank-r base matrix ``X`` the residual is

    R = P_r(X + Delta) - (X + Delta - P_U2 Delta P_V2)

and it obeys three global bounds in the Frobenius norm::

    ||R|| <= ||X|| + 2 ||Delta||                              (trivial)
    ||R|| <= 4 (1 + sqrt 2) ||Delta||^2 / sigma_r              (quadratic)
    ||R|| <= 2 (1 + sqrt 2) ||Delta|| min(2 ||Delta|| / sigma_r, 1)

This module evaluates them, the two projector-difference lemmas used in their
proof, and the two perturbations that show the constants cannot be improved
much (one pushes the normalized ratio above ``1 + 1/sqrt 2``, the other attains
the asymptotic constant ``1 / (sigma_r sqrt 3)``).
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_matrix, check_same_shape
from .exceptions import NotRankR, ParameterOutOfRange
from .expansions import partition_E, second_order_terms
from .linalg import (
    _oriented_projectors,
    full_svd,
    projectors,
    require_cut,
    subspace_decompose,
    tsvd,
    weyl_mirsky_margins,
)

#: absolute slack allowed on every inequality (two SVDs of backward error)
SLACK = 1e-9
#: slack for the appendix-lemma margins
LEMMA_SLACK = 1e-10
#: relative threshold below which sigma~_r == sigma~_{r+1} is treated as a tie
NONUNIQUE_RTOL = 1e-12

C_QUADRATIC = 4 * (1 + np.sqrt(2))
C_COMBINED = 2 * (1 + np.sqrt(2))
C_LOWER = 1 + 1 / np.sqrt(2)
C_SHARP = 1 / np.sqrt(3)


@dataclass
class ResidualReport:
    """Residual of the first-order rank-r expansion and its three bounds.

    ``ratio`` is ``sigma_r ||R|| / ||Delta||^2``; it is ``None`` when
    ``Delta == 0``.
    """

    residual: np.ndarray
    residual_norm: float
    bound_trivial: float
    bound_quadratic: float
    bound_combined: float
    ratio: float | None
    nonunique_truncation: bool
    sigma_r: float
    delta_norm: float

    @property
    def bounds(self):
        return {
            "trivial": self.bound_trivial,
            "quadratic": self.bound_quadratic,
            "combined": self.bound_combined,
        }

    def satisfied(self, slack=SLACK):
        return {k: self.residual_norm <= v + slack for k, v in self.bounds.items()}

    @property
    def binding(self):
        """Name of the tightest of the three bounds."""
        b = self.bounds
        return min(b, key=b.get)


@dataclass
class LemmaMargins:
    """Both sides of the two projector-difference lemmas."""

    mdp_lhs: float
    mdp_rhs: float
    pdp_lhs: float
    pdp_rhs: float

    @property
    def mdp_margin(self):
        return self.mdp_rhs - self.mdp_lhs

    @property
    def pdp_margin(self):
        return self.pdp_rhs - self.pdp_lhs

    def ok(self, slack=LEMMA_SLACK):
        return self.mdp_margin >= -slack and self.pdp_margin >= -slack


@dataclass
class SecondOrderResidual:
    """Quadratic part of the residual, ``R_2X``.

    ``norm`` is computed from the three addends as a Pythagorean sum and
    ``norm_direct`` from the assembled matrix; ``inner`` holds the pairwise
    trace inner products of the addends (all zero in exact arithmetic).
    """

    matrix: np.ndarray
    norm: float
    norm_direct: float
    addends: dict
    inner: dict = field(default_factory=dict)


def _rank_r_dec(X, r):
    dec = subspace_decompose(X, r)
    require_cut(dec)
    if not dec.is_rank_r():
        raise NotRankR(
            f"X is not rank {r} within tolerance: sigma_(r+1) = {dec.sigma2[0]:.3e}"
        )
    return dec


def _as_dec(X_or_dec, r=None):
    if hasattr(X_or_dec, "U1"):
        dec = X_or_dec
        require_cut(dec)
        if not dec.is_rank_r():
            raise NotRankR(f"base matrix is not rank {dec.r}")
        return dec
    return _rank_r_dec(X_or_dec, r)


def residual(X, r, Delta):
    """Residual ``P_r(X + Delta) - (X + Delta - P_U2 Delta P_V2)``.

    Valid for any magnitude of ``Delta``. When ``sigma~_r == sigma~_{r+1}``
    the deterministic truncation of :func:`tsvd` is used and
    ``nonunique_truncation`` is set.

    Parameters
    ----------
    X : array_like, shape (m, n)
        Base matrix, rank ``r`` within tolerance.
    r : int
    Delta : array_like, shape (m, n)

    Returns
    -------
    ResidualReport
    """
    X = check_matrix(X)
    D = check_matrix(Delta, "Delta")
    check_same_shape(X, D)
    dec = _rank_r_dec(X, r)
    ps = projectors(dec)
    Xt = X + D
    s_t = np.linalg.svd(Xt, compute_uv=False)
    nonunique = bool(s_t[r - 1] - s_t[r] <= NONUNIQUE_RTOL * s_t[0]) if s_t[0] > 0 else True
    R = tsvd(Xt, r) - (X + D - ps.PU2 @ D @ ps.PV2)
    nR = float(np.linalg.norm(R))
    nD = float(np.linalg.norm(D))
    sr = float(dec.sigma1[-1])
    return ResidualReport(
        residual=R,
        residual_norm=nR,
        bound_trivial=float(np.linalg.norm(X)) + 2 * nD,
        bound_quadratic=C_QUADRATIC * nD**2 / sr,
        bound_combined=C_COMBINED * nD * min(2 * nD / sr, 1.0),
        ratio=sr * nR / nD**2 if nD > 0 else None,
        nonunique_truncation=nonunique,
        sigma_r=sr,
        delta_norm=nD,
    )


def residual_second_order(dec, Delta):
    """The quadratic term ``R_2X`` of the residual about a rank-r ``X``.

    ``R_2X = X^+ Delta^T P_U2 Delta P_V2 + P_U2 Delta P_V2 Delta^T X^+
    + P_U2 Delta X^+^T Delta P_V2``; the addends are mutually orthogonal, so
    the norm is the root of the sum of their squared norms.

    Raises
    ------
    NotRankR
    SingularTruncation
    """
    dec = _as_dec(dec)
    terms = second_order_terms(dec, Delta)
    M = sum(terms.values())
    keys = list(terms)
    inner = {}
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            a, b = terms[keys[i]], terms[keys[j]]
            inner[(keys[i], keys[j])] = float(np.sum(a * b))
    return SecondOrderResidual(
        matrix=M,
        norm=float(np.sqrt(sum(np.sum(t * t) for t in terms.values()))),
        norm_direct=float(np.linalg.norm(M)),
        addends=terms,
        inner=inner,
    )


def lemma_margins(X, r, Delta):
    """Evaluate the two projector-difference lemmas on ``(X, Delta)``.

    With ``dP_U2 = P_U2~ - P_U2`` and ``dP_V2 = P_V2~ - P_V2`` taken from the
    SVDs of ``X + Delta`` and ``X``::

        max(||dP_U2 X||, ||X dP_V2||)            <= 2 ||Delta||
        max(||P_U2 dP_U2 Delta||, ||Delta dP_V2 P_V2||) <= (2 / sigma_r) ||Delta||^2
    """
    X = check_matrix(X)
    D = check_matrix(Delta, "Delta")
    check_same_shape(X, D)
    dec = _rank_r_dec(X, r)
    dec_t = subspace_decompose(X + D, r)
    _, PU2, _, PV2 = _oriented_projectors(dec)
    _, PU2t, _, PV2t = _oriented_projectors(dec_t)
    Xo = dec.matrix
    Do = dec.orient(D)
    dU = PU2t - PU2
    dV = PV2t - PV2
    nD = float(np.linalg.norm(Do))
    return LemmaMargins(
        mdp_lhs=float(max(np.linalg.norm(dU @ Xo), np.linalg.norm(Xo @ dV))),
        mdp_rhs=2 * nD,
        pdp_lhs=float(max(np.linalg.norm(PU2 @ dU @ Do), np.linalg.norm(Do @ dV @ PV2))),
        pdp_rhs=2 * nD**2 / float(dec.sigma1[-1]),
    )


def extremal_delta_lower(dec, sigma, eps):
    """Perturbation ``(sigma - sigma_r - eps) u_r v_r^T + sigma u_{r+1} v_{r+1}^T``.

    It swaps the roles of the r-th and (r+1)-th directions, so the truncation
    jumps to the other subspace. At ``sigma = sigma_r / sqrt 2`` and small
    ``eps`` the normalized residual ratio approaches ``1 + 1/sqrt 2``.

    Parameters
    ----------
    dec : SubspaceDecomposition
    sigma, eps : float
        Must satisfy ``0 < eps < sigma < sigma_r``.
    """
    require_cut(dec)
    sr = float(dec.sigma1[-1])
    if not (0 < eps < sigma < sr):
        raise ParameterOutOfRange(
            f"need 0 < eps < sigma < sigma_r = {sr:.6g}, got eps={eps!r}, sigma={sigma!r}"
        )
    ur, vr = dec.U1[:, -1], dec.V1[:, -1]
    u2, v2 = dec.U2[:, 0], dec.V2[:, 0]
    D = (sigma - sr - eps) * np.outer(ur, vr) + sigma * np.outer(u2, v2)
    return dec.orient(D)


def extremal_delta_rsup(dec, eps):
    """Perturbation ``(eps/sqrt 3)(u_r v_{r+1}^T + u_{r+1} v_r^T + u_{r+1} v_{r+1}^T)``.

    Its Frobenius norm is ``eps`` and it attains the asymptotic residual
    constant ``1 / (sigma_r sqrt 3)``.
    """
    require_cut(dec)
    if not eps > 0:
        raise ParameterOutOfRange(f"eps must be positive, got {eps!r}")
    ur, vr = dec.U1[:, -1], dec.V1[:, -1]
    u2, v2 = dec.U2[:, 0], dec.V2[:, 0]
    D = np.outer(ur, v2) + np.outer(u2, vr) + np.outer(u2, v2)
    return dec.orient(eps / np.sqrt(3) * D)


def rsup_blocks_ok(dec, Delta, eps, atol=1e-12):
    """Check the E-block pattern of :func:`extremal_delta_rsup`."""
    E = partition_E(dec, Delta)
    r = dec.r
    c = eps / np.sqrt(3)
    E12 = np.zeros_like(E.E12)
    E12[r - 1, 0] = c
    E21 = np.zeros_like(E.E21)
    E21[0, r - 1] = c
    E22 = np.zeros_like(E.E22)
    E22[0, 0] = c
    return (
        np.allclose(E.E11, 0, atol=atol)
        and np.allclose(E.E12, E12, atol=atol)
        and np.allclose(E.E21, E21, atol=atol)
        and np.allclose(E.E22, E22, atol=atol)
    )


def _assertion(name, lhs, rhs, slack):
    margin = float(rhs - lhs)
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs), "margin": margin,
            "pass": bool(margin >= -slack)}


@dataclass
class BoundSuite:
    report: ResidualReport
    lemmas: LemmaMargins
    assertions: list
    binding: str

    @property
    def passed(self):
        return all(a["pass"] for a in self.assertions)


def bound_suite(X, r, Delta, slack=SLACK):
    """Evaluate every bound on ``(X, Delta)`` and collect pass/fail records.

    Each record is a dict ``{name, lhs, rhs, margin, pass}`` with
    ``margin = rhs - lhs``.
    """
    rep = residual(X, r, Delta)
    lem = lemma_margins(X, r, Delta)
    wm = weyl_mirsky_margins(X, Delta)
    a = [
        _assertion("weyl", wm.weyl_lhs, wm.weyl_rhs, slack),
        _assertion("mirsky", wm.mirsky_lhs, wm.mirsky_rhs, slack),
        _assertion("lemma_mdp", lem.mdp_lhs, lem.mdp_rhs, LEMMA_SLACK),
        _assertion("lemma_pdp", lem.pdp_lhs, lem.pdp_rhs, LEMMA_SLACK),
        _assertion("residual_trivial", rep.residual_norm, rep.bound_trivial, slack),
        _assertion("residual_quadratic", rep.residual_norm, rep.bound_quadratic, slack),
        _assertion("residual_combined", rep.residual_norm, rep.bound_combined, slack),
    ]
    return BoundSuite(report=rep, lemmas=lem, assertions=a, binding=rep.binding)


def singular_values_after(X, Delta):
    """Singular values of ``X + Delta`` (convenience for extremal checks)."""
    return full_svd(np.asarray(X) + np.asarray(Delta)).sigma
