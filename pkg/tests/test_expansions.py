import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import projector_oracle, random_orthogonal, random_with_spectrum, tsvd_oracle
from tsvdpert import (
    DimensionMismatch,
    ExpansionWarning,
    GapViolation,
    NonConvergence,
    NotRankR,
    SingularAlignment,
    double_sum,
    feppon_derivative,
    gap_check,
    partition_E,
    projectors,
    rotations_exact,
    rotations_oracle,
    rotations_series,
    subspace_decompose,
    tsvd,
    tsvd_first_order,
    tsvd_first_order_rank_r,
    tsvd_second_order_rank_r,
)
from tsvdpert.expansions import eq7_defect, projector_delta_first_order, rotated_bases
from tsvdpert.harness import (
    EXAMPLE1_DELTA,
    EXAMPLE1_GOLDEN,
    EXAMPLE1_X,
    EXAMPLE2_DELTA,
    EXAMPLE2_X,
    fit_loglog_slope,
)

seeds = st.integers(0, 2**32 - 1)
LADDER = np.geomspace(1e-2, 1e-5, 8)


def gap_instance(rng, m=6, n=4, r=2, rank_r=False, frac=0.3):
    """Random (dec, Delta) with ||Delta||_2 = frac * gap / 2."""
    k = min(m, n)
    s = np.sort(rng.uniform(0.5, 3.0, k))[::-1]
    s[r:] *= 0.5 * s[r - 1] / s[r]  # force a clear gap at the cut
    if rank_r:
        s[r:] = 0
    X = random_with_spectrum(rng, s, m, n)
    dec = subspace_decompose(X, r)
    D = rng.standard_normal((m, n))
    D *= frac * dec.gap / 2 / np.linalg.norm(D, 2)
    return X, dec, D


def grouped_double_sum_example1():
    """Double sum of the 4x3 example evaluated through the printed unique projectors.

    sigma_1 = sigma_2 = 6, sigma_3 = 3, so the coefficients are 9/27 = 1/3 and
    18/27 = 2/3 for both tied indices and the grouped form only needs
    P_U1, u3 u3^T, P_V1, v3 v3^T, u1 v1^T + u2 v2^T and u3 v3^T.
    """
    D = EXAMPLE1_DELTA
    PU1 = np.array([[1, -1, 0, 0], [-1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]]) / 2
    u3u3 = np.array([[1, 1, -1, 1], [1, 1, -1, 1], [-1, -1, 1, -1], [1, 1, -1, 1]]) / 4
    PV1 = np.array([[5, 4, 2], [4, 5, -2], [2, -2, 8]]) / 9
    v3v3 = np.array([[4, -4, -2], [-4, 4, 2], [-2, 2, 1]]) / 9
    W1 = np.array([[3, -3, 12], [-3, 3, -12], [9, 9, 0], [9, 9, 0]]) / 18
    w3 = np.array([[2, -2, -1], [2, -2, -1], [-2, 2, 1], [2, -2, -1]]) / 6
    return (PU1 @ D @ v3v3 + u3u3 @ D @ PV1) / 3 + 2 * (W1 @ D.T @ w3 + w3 @ D.T @ W1) / 3


class TestPartitionE:
    def test_zero(self):
        E = partition_E(subspace_decompose(EXAMPLE1_X, 2), np.zeros((4, 3)))
        assert E.frobenius_sq() == 0

    def test_example2(self):
        E = partition_E(subspace_decompose(EXAMPLE2_X, 2), EXAMPLE2_DELTA)
        assert_allclose(E.E11, np.diag([0.1, -0.5]), atol=1e-15)
        assert E.E22[0, 0] == pytest.approx(0.5)
        assert_allclose(E.E12, 0, atol=1e-15)
        assert_allclose(E.E21, 0, atol=1e-15)

    @given(seeds, st.booleans())
    def test_norm_preserved(self, seed, wide):
        rng = np.random.default_rng(seed)
        shape = (3, 5) if wide else (5, 3)
        X, D = rng.standard_normal(shape), rng.standard_normal(shape)
        E = partition_E(subspace_decompose(X, 2), D)
        assert_allclose(E.frobenius_sq(), np.linalg.norm(D) ** 2, rtol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            partition_E(subspace_decompose(EXAMPLE1_X, 2), np.zeros((4, 4)))


class TestRotations:
    def test_zero(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        rot = rotations_exact(dec, np.zeros((4, 3)))
        assert rot.iterations == 1
        assert not rot.Q.any() and not rot.P.any()
        o = rotations_oracle(dec, dec)
        assert_allclose(o.Q, 0, atol=1e-15)
        assert_allclose(o.P, 0, atol=1e-15)
        for order in (1, 2):
            s = rotations_series(dec, np.zeros((4, 3)), order)
            assert not s.Q.any() and not s.P.any()

    def test_example1_exact_vs_oracle(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        rot = rotations_exact(dec, EXAMPLE1_DELTA)
        assert rot.eq7_residual <= 1e-10
        o = rotations_oracle(dec, subspace_decompose(EXAMPLE1_X + EXAMPLE1_DELTA, 2), EXAMPLE1_DELTA)
        assert o.eq7_residual <= 1e-9
        assert_allclose(rot.Q, o.Q, atol=1e-10)
        assert_allclose(rot.P, o.P, atol=1e-10)

    @given(seeds, st.booleans(), st.sampled_from([(6, 4), (4, 6), (5, 5)]))
    def test_exact_vs_oracle_random(self, seed, rank_r, shape):
        rng = np.random.default_rng(seed)
        X, dec, D = gap_instance(rng, *shape, rank_r=rank_r, frac=0.9)
        rot = rotations_exact(dec, D)
        o = rotations_oracle(dec, subspace_decompose(X + D, 2), D)
        assert rot.eq7_residual <= 1e-10 * max(1, dec.scale)
        assert o.eq7_residual <= 1e-9
        assert np.linalg.norm(rot.Q - o.Q) <= 1e-9
        assert np.linalg.norm(rot.P - o.P) <= 1e-9
        # the rotated bases span the perturbed dominant subspaces
        U1h, U2h, V1h, V2h = rotated_bases(dec, rot)
        PU1t, _, PV1t, _ = projector_oracle(dec.matrix + dec.orient(D), 2)
        assert np.linalg.norm(U1h @ U1h.T - PU1t) <= 1e-9
        assert np.linalg.norm(V1h @ V1h.T - PV1t) <= 1e-9

    def test_gap_violation(self):
        dec = subspace_decompose(EXAMPLE2_X, 2)
        with pytest.raises(GapViolation):
            rotations_exact(dec, EXAMPLE2_DELTA)
        with pytest.raises(GapViolation):
            rotations_series(dec, EXAMPLE2_DELTA)

    def test_non_convergence(self, rng):
        X, dec, D = gap_instance(rng, frac=0.9)
        with pytest.raises(NonConvergence):
            rotations_exact(dec, D, max_iter=1)

    def test_singular_alignment(self):
        X = np.diag([2.0, 1.0, 0.0])
        Xt = np.diag([1.0, 2.0, 0.0])
        with pytest.raises(SingularAlignment):
            rotations_oracle(subspace_decompose(X, 1), subspace_decompose(Xt, 1))

    def test_first_order_scaling(self, rng):
        X, dec, D = gap_instance(rng)
        D /= np.linalg.norm(D)
        ratios = [np.linalg.norm(rotations_exact(dec, e * D).Q) / e for e in np.geomspace(1e-2, 1e-6, 5)]
        assert max(ratios) / min(ratios) < 1.1

    def test_kron_and_closed_paths_agree(self, rng):
        for _ in range(20):
            X, dec, D = gap_instance(rng, rank_r=True)
            for order in (1, 2):
                a = rotations_series(dec, D, order, path="kron")
                b = rotations_series(dec, D, order, path="closed")
                assert_allclose(a.Q, b.Q, atol=1e-12)
                assert_allclose(a.P, b.P, atol=1e-12)

    def test_closed_path_needs_rank_r(self, rng):
        X, dec, D = gap_instance(rng)
        with pytest.raises(NotRankR):
            rotations_series(dec, D, 1, path="closed")

    @pytest.mark.parametrize("rank_r", [True, False])
    def test_series_error_slopes(self, rng, rank_r):
        X, dec, D = gap_instance(rng, rank_r=rank_r)
        D /= np.linalg.norm(D)
        errs = {1: [], 2: []}
        for e in LADDER:
            ex = rotations_exact(dec, e * D)
            for order in (1, 2):
                s = rotations_series(dec, e * D, order)
                errs[order].append(np.hypot(np.linalg.norm(s.Q - ex.Q), np.linalg.norm(s.P - ex.P)))
        assert fit_loglog_slope(LADDER, errs[1], floor=1e-15)[0] >= 1.9
        assert fit_loglog_slope(LADDER, errs[2], floor=1e-15)[0] >= 2.85

    def test_coefficient_inverse_is_diagonal(self, rng):
        # inverse of (I (x) S1^2 - S2 S2^T (x) I) has entries 1 / (s_i^2 - s_{r+k}^2)
        s1 = np.array([3.0, 2.0])
        s2 = np.array([1.0, 0.5, 0.0])
        M = np.kron(np.eye(3), np.diag(s1**2)) - np.kron(np.diag(s2**2), np.eye(2))
        d = np.array([1 / (a**2 - b**2) for b in s2 for a in s1])
        assert_allclose(np.linalg.inv(M), np.diag(d), atol=1e-12)


class TestRotatedBases:
    def test_identity(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        rot = rotations_exact(dec, np.zeros((4, 3)))
        U1h, U2h, V1h, V2h = rotated_bases(dec, rot)
        assert_allclose(U1h, dec.U1)
        assert_allclose(U2h, dec.U2)
        assert_allclose(V1h, dec.V1)
        assert_allclose(V2h, dec.V2)

    def test_orthonormal_random_small(self, rng):
        dec = subspace_decompose(rng.standard_normal((6, 4)), 2)
        rot = type(rotations_exact(dec, np.zeros((6, 4))))(
            0.1 * rng.standard_normal((4, 2)), 0.1 * rng.standard_normal((2, 2)), "test")
        U1h, U2h, V1h, V2h = rotated_bases(dec, rot)
        assert np.linalg.norm(U1h.T @ U1h - np.eye(2)) <= 1e-12
        assert np.linalg.norm(U1h.T @ U2h) <= 1e-10
        assert np.linalg.norm(V1h.T @ V2h) <= 1e-10
        assert np.linalg.norm(U2h.T @ U2h - np.eye(4)) <= 1e-10

    def test_projector_delta(self, rng):
        X, dec, D = gap_instance(rng)
        D /= np.linalg.norm(D)
        ratios = []
        for e in np.geomspace(1e-2, 1e-4, 5):
            rot = rotations_exact(dec, e * D)
            dU, dV = projector_delta_first_order(dec, rot)
            assert_allclose(dU, dU.T, atol=1e-14)
            assert_allclose(dV, dV.T, atol=1e-14)
            _, PU2t, _, PV2t = projector_oracle(dec.matrix + e * dec.orient(D), 2)
            _, PU2, _, PV2 = projector_oracle(dec.matrix, 2)
            ratios.append(max(np.linalg.norm(PU2t - PU2 - dU), np.linalg.norm(PV2t - PV2 - dV)) / e**2)
        assert max(ratios) < 2 * min(ratios) + 1e-6


class TestFirstOrder:
    def test_example1_golden(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        res = tsvd_first_order(dec, EXAMPLE1_DELTA)
        ps = projectors(dec)
        assert_allclose(res.base, EXAMPLE1_GOLDEN["tsvd_X"], atol=1e-12)
        assert_allclose(ps.PU2 @ EXAMPLE1_DELTA @ ps.PV2, EXAMPLE1_GOLDEN["PU2_Delta_PV2"], atol=1e-12)
        assert_allclose(res.corrections["double_sum"], EXAMPLE1_GOLDEN["G"], atol=1e-12)
        assert_allclose(res.approx, EXAMPLE1_GOLDEN["first_order"], atol=1e-12)
        assert_allclose(res.approx, res.base + sum(res.corrections.values()), atol=1e-12)

    def test_double_sum_vs_grouped_oracle(self):
        G = double_sum(subspace_decompose(EXAMPLE1_X, 2), EXAMPLE1_DELTA)
        assert_allclose(G, grouped_double_sum_example1(), atol=1e-12)

    def test_invariant_under_tied_block_mixing(self, rng):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        base = tsvd_first_order(dec, EXAMPLE1_DELTA).approx
        for _ in range(20):
            R = random_orthogonal(rng, 2)
            mixed = dataclasses.replace(dec, U1=dec.U1 @ R, V1=dec.V1 @ R)
            assert_allclose(mixed.U1 @ mixed.Sigma1 @ mixed.V1.T, dec.U1 @ dec.Sigma1 @ dec.V1.T,
                            atol=1e-13)
            got = tsvd_first_order(mixed, EXAMPLE1_DELTA).approx
            assert np.abs(got - base).max() <= 1e-10

    def test_zero(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        res = tsvd_first_order(dec, np.zeros((4, 3)))
        assert_allclose(res.approx, EXAMPLE1_GOLDEN["tsvd_X"], atol=1e-13)

    def test_rank_r_has_no_double_sum(self, rng):
        X, dec, D = gap_instance(rng, rank_r=True)
        res = tsvd_first_order(dec, D)
        assert not res.corrections["double_sum"].any()
        assert_allclose(res.approx, tsvd_first_order_rank_r(dec, D).approx, atol=1e-12)

    def test_example2_forced(self):
        dec = subspace_decompose(EXAMPLE2_X, 2)
        with pytest.raises(GapViolation):
            tsvd_first_order(dec, EXAMPLE2_DELTA)
        with pytest.warns(ExpansionWarning):
            res = tsvd_first_order(dec, EXAMPLE2_DELTA, force=True)
        want = np.zeros((4, 3))
        want[0, 0], want[1, 1] = 2.1, 1.5
        assert_allclose(res.approx, want, atol=1e-12)
        assert not res.valid

    def test_tied_cut_rejected(self):
        dec = subspace_decompose(np.diag([2.0, 1.0, 1.0]), 2)
        with pytest.raises(GapViolation):
            tsvd_first_order(dec, np.zeros((3, 3)), force=True)

    @given(seeds, st.sampled_from([(6, 4), (4, 6), (5, 5), (7, 3)]), st.booleans())
    def test_matches_feppon(self, seed, shape, rank_r):
        rng = np.random.default_rng(seed)
        X, dec, D = gap_instance(rng, *shape, rank_r=rank_r, frac=rng.uniform(0.01, 0.99))
        corr = tsvd_first_order(dec, D).correction
        assert np.abs(corr - feppon_derivative(dec, D)).max() <= 1e-12

    def test_feppon_zero_and_rank_r(self, rng):
        X, dec, D = gap_instance(rng, rank_r=True)
        assert not feppon_derivative(dec, np.zeros_like(D)).any()
        ps = projectors(dec)
        assert_allclose(feppon_derivative(dec, D), D - ps.PU2 @ D @ ps.PV2, atol=1e-13)

    def test_directional_derivative(self, rng):
        # central difference of the exact truncation, an independent oracle
        X, dec, D = gap_instance(rng)
        h = 1e-5
        fd = (tsvd_oracle(X + h * D, 2) - tsvd_oracle(X - h * D, 2)) / (2 * h)
        assert_allclose(feppon_derivative(dec, D), fd, atol=1e-8)

    def test_general_path_slope_example1(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        D = EXAMPLE1_DELTA / np.linalg.norm(EXAMPLE1_DELTA)
        err = [np.linalg.norm(tsvd(EXAMPLE1_X + e * D, 2) - tsvd_first_order(dec, e * D).approx)
               for e in LADDER]
        assert fit_loglog_slope(LADDER, err)[0] >= 1.9


class TestRankR:
    def test_not_rank_r(self):
        dec = subspace_decompose(EXAMPLE1_X, 2)
        with pytest.raises(NotRankR):
            tsvd_first_order_rank_r(dec, EXAMPLE1_DELTA)
        with pytest.raises(NotRankR):
            tsvd_second_order_rank_r(dec, EXAMPLE1_DELTA)

    def test_zero(self, rank3):
        dec = subspace_decompose(rank3, 3)
        for f in (tsvd_first_order_rank_r, tsvd_second_order_rank_r):
            assert_allclose(f(dec, np.zeros((6, 5))).approx, rank3, atol=1e-13)

    def test_aligned_perturbation(self, rank3):
        dec = subspace_decompose(rank3, 3)
        D = 0.3 * np.outer(dec.U1[:, 0], dec.V1[:, 0])
        for f in (tsvd_first_order_rank_r, tsvd_second_order_rank_r):
            res = f(dec, D)
            assert_allclose(res.approx, rank3 + D, atol=1e-12)
            assert_allclose(tsvd(rank3 + D, 3), res.approx, atol=1e-12)

    def test_second_order_named_terms(self, rank3, rng):
        dec = subspace_decompose(rank3, 3)
        D = 0.01 * rng.standard_normal((6, 5))
        res = tsvd_second_order_rank_r(dec, D)
        assert set(res.corrections) == {"delta_term", "pinv_left", "pinv_right", "pinv_middle"}
        assert_allclose(res.approx, res.base + sum(res.corrections.values()), atol=1e-12)

    def test_gap_guard_and_force(self, rank3):
        dec = subspace_decompose(rank3, 3)
        D = np.outer(dec.U2[:, 0], dec.V2[:, 0])  # ||D||_2 = 1 = sigma_r
        with pytest.raises(GapViolation):
            tsvd_first_order_rank_r(dec, D)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            res = tsvd_second_order_rank_r(dec, D, force=True)
        assert len([x for x in w if issubclass(x.category, ExpansionWarning)]) == 1
        assert not res.valid

    @pytest.mark.parametrize("wide", [False, True])
    def test_slopes(self, rank3, rng, wide):
        X = rank3.T if wide else rank3
        dec = subspace_decompose(X, 3)
        D = rng.standard_normal(X.shape)
        D /= np.linalg.norm(D)
        e1, e2 = [], []
        for e in LADDER:
            exact = tsvd(X + e * D, 3)
            e1.append(np.linalg.norm(exact - tsvd_first_order_rank_r(dec, e * D).approx))
            e2.append(np.linalg.norm(exact - tsvd_second_order_rank_r(dec, e * D).approx))
        assert fit_loglog_slope(LADDER, e1)[0] >= 1.9
        assert fit_loglog_slope(LADDER, e2)[0] >= 2.85


def test_eq7_defect_zero_for_exact_solution(rng):
    X, dec, D = gap_instance(rng)
    rot = rotations_exact(dec, D)
    assert eq7_defect(dec, partition_E(dec, D), rot.Q, rot.P) == pytest.approx(rot.eq7_residual)
    assert gap_check(dec, D).satisfied


def test_transposed_coefficient_placement_is_not_the_derivative(rng):
    # the alternative placement (sigma_i a + sigma_j b) on u_j v_i^T fails the
    # finite-difference check, which is why the implemented form differs
    X, dec, D = gap_instance(rng)
    U, V, s = dec.U, dec.V, dec.sigma
    ps = projectors(dec)
    alt = ps.PU2 @ D @ ps.PV1 + ps.PU1 @ D
    for j in range(2, 4):
        for i in range(2):
            c = s[j] / (s[i] ** 2 - s[j] ** 2)
            a, b = U[:, j] @ D @ V[:, i], U[:, i] @ D @ V[:, j]
            alt += c * ((s[i] * a + s[j] * b) * np.outer(U[:, j], V[:, i])
                        + (s[j] * a + s[i] * b) * np.outer(U[:, i], V[:, j]))
    h = 1e-5
    fd = (tsvd_oracle(X + h * D, 2) - tsvd_oracle(X - h * D, 2)) / (2 * h)
    assert np.abs(alt - fd).max() > 1e-4
    assert np.abs(feppon_derivative(dec, D) - fd).max() < 1e-8
