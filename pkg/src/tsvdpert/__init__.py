"""Perturbation expansions and error bounds for the truncated SVD."""

from .bounds import (
    LemmaMargins,
    ResidualReport,
    bound_suite,
    extremal_delta_lower,
    extremal_delta_rsup,
    lemma_margins,
    residual,
    residual_second_order,
)
from .estimator import TSVDExpansion
from .exceptions import (
    DegenerateFit,
    DimensionMismatch,
    GapViolation,
    GoldenMismatch,
    InvalidMatrix,
    NonConvergence,
    NotRankR,
    NumericalFailure,
    ParameterOutOfRange,
    RankOutOfRange,
    SingularAlignment,
    SingularTruncation,
    TSVDError,
)
from .expansions import (
    ExpansionWarning,
    double_sum,
    feppon_derivative,
    partition_E,
    rotations_exact,
    rotations_oracle,
    rotations_series,
    tsvd_first_order,
    tsvd_first_order_rank_r,
    tsvd_second_order_rank_r,
)
from .harness import (
    SpectrumSpec,
    bound_search,
    convergence_study,
    gen_delta,
    gen_rank_structured,
    reproduce_example1,
    reproduce_example2,
)
from .io import read_matrix, write_matrix
from .linalg import (
    full_svd,
    gap_check,
    kron_vec_identity_check,
    pinv_rank_r,
    projectors,
    subspace_decompose,
    tsvd,
    tsvd_candidates,
    weyl_mirsky_margins,
)

__version__ = "0.1.0"
