"""Instance generators, convergence studies, bound searches, worked examples."""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._validation import check_matrix
from .bounds import (
    C_COMBINED,
    C_QUADRATIC,
    C_SHARP,
    SLACK,
    _rank_r_dec,
    residual,
)
from .exceptions import DegenerateFit, GoldenMismatch, NotRankR, ParameterOutOfRange
from .expansions import (
    double_sum,
    tsvd_first_order,
    tsvd_first_order_rank_r,
    tsvd_second_order_rank_r,
)
from .linalg import gap_check, projectors, subspace_decompose, tsvd, tsvd_candidates

NOISE_FLOOR = 1e-13
STRUCTURES = ("dense", "rank1", "rank2")
DEFAULT_LADDER = tuple(np.geomspace(1e-2, 1e-5, 8))


@dataclass
class SpectrumSpec:
    """Target singular values and shape for :func:`gen_rank_structured`."""

    values: tuple
    m: int
    n: int

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        for d in (self.m, self.n):
            if isinstance(d, bool) or int(d) != d or d < 1:
                raise ParameterOutOfRange(f"shape must be positive integers, got {self.m}x{self.n}")
        self.m, self.n = int(self.m), int(self.n)
        v = np.asarray(self.values)
        if len(v) != min(self.m, self.n):
            raise ParameterOutOfRange(
                f"need min(m, n) = {min(self.m, self.n)} singular values, got {len(v)}"
            )
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ParameterOutOfRange("singular values must be finite and nonnegative")
        if np.any(np.diff(v) > 0):
            raise ParameterOutOfRange("singular values must be in descending order")


def _haar(rng, k):
    # QR of a Gaussian sample, with the sign of diag(R) folded in so the
    # distribution is Haar rather than biased by the QR convention
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def gen_rank_structured(spec, seed):
    """Random matrix ``U diag(values) V^T`` with Haar-like orthogonal factors.

    Parameters
    ----------
    spec : SpectrumSpec
    seed : int

    Returns
    -------
    ndarray, shape (spec.m, spec.n)
    """
    if not isinstance(spec, SpectrumSpec):
        raise ParameterOutOfRange("spec must be a SpectrumSpec")
    rng = np.random.default_rng(seed)
    U = _haar(rng, spec.m)
    V = _haar(rng, spec.n)
    k = len(spec.values)
    return (U[:, :k] * np.asarray(spec.values)) @ V[:, :k].T


def gen_delta(m, n, target_fro_norm, seed, structure="dense"):
    """Seeded random perturbation scaled to a given Frobenius norm.

    ``structure`` is ``"dense"`` (Gaussian entries), ``"rank1"`` or
    ``"rank2"`` (sums of Gaussian outer products).
    """
    if not np.isfinite(target_fro_norm) or target_fro_norm < 0:
        raise ParameterOutOfRange(f"target norm must be >= 0, got {target_fro_norm!r}")
    if structure not in STRUCTURES:
        raise ParameterOutOfRange(f"structure must be one of {STRUCTURES}, got {structure!r}")
    if structure == "rank2" and min(m, n) < 2:
        raise ParameterOutOfRange("rank2 structure needs min(m, n) >= 2")
    rng = np.random.default_rng(seed)
    if structure == "dense":
        D = rng.standard_normal((m, n))
    else:
        k = 1 if structure == "rank1" else 2
        D = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
    if target_fro_norm == 0:
        return np.zeros((m, n))
    return D * (target_fro_norm / np.linalg.norm(D))


def fit_loglog_slope(x, y, floor=NOISE_FLOOR):
    """Least-squares slope and intercept of ``log y`` against ``log x``.

    Points with ``y < floor`` are dropped.

    Returns
    -------
    slope, intercept : float
    used : ndarray of bool
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    used = y >= floor
    if used.sum() < 3:
        raise DegenerateFit(f"only {int(used.sum())} points above the noise floor {floor:g}")
    slope, intercept = np.polyfit(np.log(x[used]), np.log(y[used]), 1)
    return float(slope), float(intercept), used


@dataclass
class ConvergenceReport:
    eps_ladder: list
    residual_norms: list
    slope: float
    intercept: float
    order_tested: int
    path: str = ""
    used: list = field(default_factory=list)


def _expansion(dec, D, order):
    if order == 2:
        return tsvd_second_order_rank_r(dec, D)
    if dec.is_rank_r():
        return tsvd_first_order_rank_r(dec, D)
    return tsvd_first_order(dec, D)


def convergence_study(X, r, direction, eps_ladder=DEFAULT_LADDER, order=1):
    """Empirical convergence order of an expansion along a fixed direction.

    For every ``eps`` the error ``||P_r(X + eps D) - expansion(eps D)||`` is
    recorded, with ``D`` the direction scaled to unit Frobenius norm, and a
    line is fitted on the log-log points above the noise floor.

    Order 1 uses the rank-r expansion when ``X`` is rank ``r`` and the
    general one (with the double sum) otherwise; order 2 needs rank ``r``.
    """
    if order not in (1, 2):
        raise ParameterOutOfRange(f"order must be 1 or 2, got {order!r}")
    X = check_matrix(X)
    D = check_matrix(direction, "direction")
    nD = np.linalg.norm(D)
    if nD == 0:
        raise ParameterOutOfRange("direction must be nonzero")
    D = D / nD
    eps = np.asarray(eps_ladder, dtype=float)
    if eps.ndim != 1 or len(eps) < 1 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ParameterOutOfRange("eps ladder must be positive and strictly decreasing")
    dec = subspace_decompose(X, r)
    if order == 2 and not dec.is_rank_r():
        raise NotRankR(f"second-order expansion needs a rank-{r} base matrix")
    res = []
    for e in eps:
        approx = _expansion(dec, e * D, order).approx
        res.append(float(np.linalg.norm(tsvd(X + e * D, r) - approx)))
    slope, intercept, used = fit_loglog_slope(eps, res)
    path = "rank-r" if dec.is_rank_r() else "general"
    return ConvergenceReport(list(map(float, eps)), res, slope, intercept, order, path,
                             used.tolist())


@dataclass
class SearchReport:
    trials: int
    max_ratio: float
    argmax_delta_descriptor: dict
    bound_constant: float
    violations: int
    theorem: str = "thm3"
    violations_by_bound: dict = field(default_factory=dict)


THEOREMS = ("thm3", "thm4", "thm5")


def _trial_seeds(seed, trials):
    children = np.random.SeedSequence(seed).spawn(trials)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def bound_search(X, r, trials, norm_range, seed, theorem="thm3", rtol=0.01):
    """Randomized search for the largest residual ratio ``||R|| / ||Delta||^2``.

    Norms are drawn log-uniformly from ``norm_range``; structures cycle through
    dense, rank-1 and rank-2. Every trial is checked against the trivial,
    quadratic and combined bounds; ``violations`` counts failures of the
    selected ``theorem``:

    * ``"thm3"``: quadratic bound, constant ``4(1 + sqrt 2) / sigma_r``;
    * ``"thm4"``: combined bound, constant ``2(1 + sqrt 2) / sigma_r`` reported;
    * ``"thm5"``: asymptotic constant ``1 / (sigma_r sqrt 3)`` with relative
      tolerance ``rtol`` (only meaningful for small norms).

    The descriptor of the worst trial includes the integer seed and structure
    that regenerate it with :func:`gen_delta`.
    """
    if theorem not in THEOREMS:
        raise ParameterOutOfRange(f"theorem must be one of {THEOREMS}, got {theorem!r}")
    X = check_matrix(X)
    if isinstance(trials, bool) or int(trials) != trials or trials < 1:
        raise ParameterOutOfRange(f"trials must be a positive integer, got {trials!r}")
    trials = int(trials)
    lo, hi = (float(v) for v in norm_range)
    if not (0 < lo <= hi):
        raise ParameterOutOfRange(f"norm range must satisfy 0 < lo <= hi, got {norm_range!r}")
    dec = _rank_r_dec(X, r)
    sr = float(dec.sigma1[-1])
    m, n = X.shape
    constant = {"thm3": C_QUADRATIC, "thm4": C_COMBINED, "thm5": C_SHARP}[theorem] / sr

    seeds = _trial_seeds(seed, trials)
    log_lo, log_hi = np.log(lo), np.log(hi)
    counts = {"trivial": 0, "quadratic": 0, "combined": 0, "sharp": 0}
    best = (-np.inf, None)
    for i, s in enumerate(seeds):
        u = np.random.default_rng(s).random()
        norm = float(np.exp(log_lo + (log_hi - log_lo) * u))
        structure = STRUCTURES[i % len(STRUCTURES)]
        D = gen_delta(m, n, norm, s, structure)
        rep = residual(X, r, D)
        for k, ok in rep.satisfied().items():
            counts[k] += not ok
        ratio = rep.residual_norm / norm**2
        if ratio > C_SHARP / sr * (1 + rtol):
            counts["sharp"] += 1
        if ratio > best[0]:
            best = (ratio, {"trial": i, "norm": norm, "seed": s, "structure": structure})
    selected = {"thm3": "quadratic", "thm4": "combined", "thm5": "sharp"}[theorem]
    return SearchReport(
        trials=trials,
        max_ratio=float(best[0]),
        argmax_delta_descriptor=best[1],
        bound_constant=float(constant),
        violations=counts[selected],
        theorem=theorem,
        violations_by_bound=counts,
    )


# ---------------------------------------------------------------------------
# worked examples

def _fr(rows, scale=1):
    """Exact rational matrix evaluated to float."""
    scale = Fraction(scale)
    return np.array([[float(Fraction(v) * scale) for v in row] for row in rows])


EXAMPLE1_X = _fr([[4, -4, 7], [0, 0, -9], [4, 8, 1], [8, 4, -1]], Fraction(1, 2))
EXAMPLE1_DELTA = _fr([[3, 3, -9], [-3, -9, 3], [7, 5, -5], [-1, 7, -7]], Fraction(3, 200))

EXAMPLE1_GOLDEN = {
    "tsvd_X": _fr([[1, -1, 4], [-1, 1, -4], [3, 3, 0], [3, 3, 0]]),
    "PU2": _fr([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, -1], [0, 0, -1, 1]], Fraction(1, 2)),
    "PV2": _fr([[4, -4, -2], [-4, 4, 2], [-2, 2, 1]], Fraction(1, 9)),
    "PU2_Delta_PV2": _fr([[2, -2, -1], [2, -2, -1], [2, -2, -1], [-2, 2, 1]], Fraction(3, 200)),
    "G": _fr([[-6, 3, 0], [2, -5, -4], [-2, 5, 4], [-6, 3, 0]], Fraction(1, 200)),
    # printed as 3.06 in the source at (3, 1); the printed components sum to 3.065
    "first_order": _fr([["0.985", "-0.91", "3.88"], ["-1.065", "0.87", "-3.96"],
                        ["3.065", "3.13", "-0.04"], ["2.985", "3.09", "-0.12"]]),
}
EXAMPLE1_FIRST_ORDER_PRINTED = _fr([["0.985", "-0.91", "3.88"], ["-1.065", "0.87", "-3.96"],
                                    ["3.06", "3.13", "-0.04"], ["2.985", "3.09", "-0.12"]])
EXAMPLE1_EXACT_4DP = _fr([["0.9840", "-0.9088", "3.8792"], ["-1.0632", "0.8689", "-3.9615"],
                          ["3.0650", "3.1284", "-0.0403"], ["2.9870", "3.0890", "-0.1213"]])
EXAMPLE1_FIRST_ORDER_ERROR = 0.0043
EXAMPLE1_ZERO_ORDER_ERROR = 0.3016
EXAMPLE1_DELTA_NORM = 0.2985

EXAMPLE2_X = np.array([[2.0, 0, 0], [0, 2, 0], [0, 0, 1], [0, 0, 0]])
EXAMPLE2_DELTA = np.array([[0.1, 0, 0], [0, -0.5, 0], [0, 0, 0.5], [0, 0, 0]])
EXAMPLE2_CANDIDATES = (
    np.array([[2.1, 0, 0], [0, 1.5, 0], [0, 0, 0], [0, 0, 0]]),
    np.array([[2.1, 0, 0], [0, 0, 0], [0, 0, 1.5], [0, 0, 0]]),
)


@dataclass
class GoldenReport:
    """Computed values, goldens and per-check pass/fail of a worked example."""

    name: str
    values: dict
    checks: list

    @property
    def passed(self):
        return all(c["pass"] for c in self.checks)

    def raise_on_failure(self):
        bad = {c["name"]: c for c in self.checks if not c["pass"]}
        if bad:
            raise GoldenMismatch(f"{self.name}: {len(bad)} golden check(s) failed: "
                                 f"{sorted(bad)}", diffs=bad)


def _mat_check(name, got, want, tol):
    diff = np.abs(np.asarray(got) - np.asarray(want))
    worst = float(diff.max())
    return {"name": name, "lhs": worst, "rhs": tol, "margin": tol - worst,
            "pass": bool(worst <= tol), "entry_diff": diff.tolist()}


def _scalar_check(name, got, want, tol):
    d = abs(float(got) - want)
    return {"name": name, "lhs": float(got), "rhs": want, "margin": tol - d,
            "pass": bool(d <= tol)}


def reproduce_example1(strict=False):
    """Recompute the 4x3 worked example with repeated top singular value.

    Every golden is checked independently: the truncation, the projectors, the
    projected perturbation, the double sum, the first-order approximation
    (1e-12), the exact truncation of ``X + Delta`` against its 4-decimal
    print (5e-5) and the two error norms (1e-4).
    """
    X, D = EXAMPLE1_X, EXAMPLE1_DELTA
    dec = subspace_decompose(X, 2)
    ps = projectors(dec)
    res = tsvd_first_order(dec, D)
    exact = tsvd(X + D, 2)
    PX = tsvd(X, 2)
    g = EXAMPLE1_GOLDEN
    v = {
        "tsvd_X": PX,
        "PU2": ps.PU2,
        "PV2": ps.PV2,
        "PU2_Delta_PV2": ps.PU2 @ D @ ps.PV2,
        "G": double_sum(dec, D),
        "first_order": res.approx,
        "exact": exact,
        "first_order_error": float(np.linalg.norm(exact - res.approx)),
        "zero_order_error": float(np.linalg.norm(exact - PX)),
        "delta_norm": float(np.linalg.norm(D)),
    }
    checks = [_mat_check(k, v[k], g[k], 1e-12) for k in g]
    checks.append(_mat_check("exact", exact, EXAMPLE1_EXACT_4DP, 5e-5))
    checks.append(_scalar_check("first_order_error", v["first_order_error"],
                                EXAMPLE1_FIRST_ORDER_ERROR, 1e-4))
    checks.append(_scalar_check("zero_order_error", v["zero_order_error"],
                                EXAMPLE1_ZERO_ORDER_ERROR, 1e-4))
    checks.append(_scalar_check("delta_norm", v["delta_norm"], EXAMPLE1_DELTA_NORM, 1e-4))
    rep = GoldenReport("example1", v, checks)
    if strict:
        rep.raise_on_failure()
    return rep


def reproduce_example2(strict=False):
    """Recompute the counter-example where the gap condition fails.

    The sufficient condition fails with equality, the forced first-order
    formula lands on one of the two valid truncations of ``X + Delta`` and
    misses the other by ``1.5 sqrt 2``.
    """
    import warnings

    from .expansions import ExpansionWarning

    X, D = EXAMPLE2_X, EXAMPLE2_DELTA
    dec = subspace_decompose(X, 2)
    gs = gap_check(dec, D)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExpansionWarning)
        res = tsvd_first_order(dec, D, force=True)
    cands = tsvd_candidates(X + D, 2)
    _, tie = tsvd(X + D, 2, return_tie=True)
    dists = [float(np.linalg.norm(res.approx - c)) for c in cands]
    v = {
        "delta_spectral": gs.delta_spectral,
        "half_gap": gs.gap / 2,
        "gap_satisfied": gs.satisfied,
        "first_order": res.approx,
        "candidates": cands,
        "tie": tie,
        "distances": dists,
    }
    checks = [
        {"name": "gap_violation", "lhs": gs.delta_spectral, "rhs": gs.gap / 2,
         "margin": gs.delta_spectral - gs.gap / 2, "pass": not gs.satisfied},
        _mat_check("first_order", res.approx, EXAMPLE2_CANDIDATES[0], 1e-12),
        {"name": "candidate_count", "lhs": len(cands), "rhs": 2, "margin": 0,
         "pass": len(cands) == 2},
        {"name": "tie_flag", "lhs": float(tie), "rhs": 1.0, "margin": 0, "pass": bool(tie)},
    ]
    if len(cands) == 2:
        found = [min(float(np.abs(c - w).max()) for c in cands) for w in EXAMPLE2_CANDIDATES]
        checks.append({"name": "candidates_match", "lhs": max(found), "rhs": 1e-12,
                       "margin": 1e-12 - max(found), "pass": max(found) <= 1e-12})
        checks.append(_scalar_check("distance_to_alternative", dists[1],
                                    1.5 * np.sqrt(2), 1e-12))
    rep = GoldenReport("example2", v, checks)
    if strict:
        rep.raise_on_failure()
    return rep
