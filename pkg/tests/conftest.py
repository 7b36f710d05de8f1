import numpy as np
import pytest
from hypothesis import settings

from tsvdpert.harness import SpectrumSpec, gen_rank_structured

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def random_orthogonal(rng, k):
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


def random_with_spectrum(rng, values, m, n):
    """Independent of the package generator: own Haar draw."""
    U = random_orthogonal(rng, m)
    V = random_orthogonal(rng, n)
    k = len(values)
    return (U[:, :k] * np.asarray(values, float)) @ V[:, :k].T


def tsvd_oracle(X, r):
    # plain LAPACK truncation; only valid away from ties at the cut
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def projector_oracle(X, r):
    """(PU1, PU2, PV1, PV2) from a plain SVD; valid without a tie at the cut."""
    U, s, Vt = np.linalg.svd(X, full_matrices=True)
    U1, V1 = U[:, :r], Vt[:r].T
    PU1, PV1 = U1 @ U1.T, V1 @ V1.T
    return PU1, np.eye(X.shape[0]) - PU1, PV1, np.eye(X.shape[1]) - PV1


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def rank3():
    """6x5 matrix with singular values (3, 2, 1, 0, 0)."""
    return gen_rank_structured(SpectrumSpec((3, 2, 1, 0, 0), 6, 5), 11)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
