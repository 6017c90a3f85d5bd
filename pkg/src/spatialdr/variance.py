"""Variance estimators over a score vector, the Moran gate, and intervals.

Cross-fitting makes every unit in a fold share the same fitted nuisance
functions, so scores carry a fold-level noise component on top of any
genuine spatial dependence.  A distance-weighted quadratic form applied
directly to the scores misattributes that shared noise to short-range
correlation.  The jackknife-HAC estimator avoids this by (i) centering
scores within folds, (ii) keeping only the off-diagonal part of the
kernel quadratic form, and (iii) restoring fold-level variation with an
ANOVA-style between-fold term:

    v_jk = [v_within(centered) - v_diag(centered)] + v_between

floored at a small epsilon.  Fold centering leaves the quadratic form
invariant to adding fold-constant offsets, which is exactly the noise
component being removed.  The same correction applies verbatim when the
kernel form is swapped for a two-way clustered (inclusion-exclusion)
covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm as _norm
from scipy.stats import t as _student_t

from .crossfit import CrossfitResult
from .dataset import (
    SpatialDataset,
    kernel_weights,
    pairwise_distance_quantile,
)
from .diagnostics import moran_weights, morans_i, permutation_pvalue
from .exceptions import (
    InsufficientDataError,
    InsufficientLabelsError,
    ParameterError,
    PartitionError,
    ZeroVarianceError,
)
from .scores import ScoreVector
from .validation import as_matrix, as_vector, check_probability

#: bandwidth substituted when a distance quantile collapses to zero, so
#: coincident pairs keep weight 1 and all positive distances get 0.
_DEGENERATE_BANDWIDTH = 1e-300

#: row-block size for the chunked quadratic form on large samples.
_BLOCK_ROWS = 2048

VARIANCE_METHODS = ("iid", "hac", "jk_hac", "twoway", "jk_twoway")


@dataclass(frozen=True)
class VarianceEstimate:
    """A variance of the point estimate (already on the 1/n^2 scale)."""

    value: float
    method: str
    components: dict = field(default_factory=dict)
    floor_applied: bool = False


@dataclass(frozen=True)
class MoranGateRecord:
    """Outcome of the labeled-residual Moran pre-test."""

    statistic: float
    p_value: float
    spatial: bool
    degenerate: bool = False


@dataclass(frozen=True)
class IntervalReport:
    """Point estimate, variance, critical-value branch, and endpoints."""

    theta_hat: float
    variance: VarianceEstimate
    critical_branch: str
    alpha: float
    lo: float
    hi: float
    gate: MoranGateRecord | None = None


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def fold_center(sv: ScoreVector):
    """Center scores at their fold means.

    Returns ``(centered, fold_means, fold_sizes)`` with fold labels taken
    as 1..K; every fold must be nonempty.
    """
    scores = sv.scores
    fold_of = sv.fold_of
    k = sv.n_folds
    if fold_of.min() < 1:
        raise PartitionError("fold labels must be 1-based")
    fold_means = np.empty(k)
    fold_sizes = np.empty(k, dtype=int)
    centered = np.empty_like(scores)
    for fold in range(1, k + 1):
        members = fold_of == fold
        size = int(members.sum())
        if size == 0:
            raise PartitionError(f"fold {fold} is empty")
        mean = float(scores[members].mean())
        fold_means[fold - 1] = mean
        fold_sizes[fold - 1] = size
        centered[members] = scores[members] - mean
    return centered, fold_means, fold_sizes


def hac_within(centered, coords, h_n: float, *, dists: np.ndarray | None = None):
    """Kernel-weighted quadratic form over all ordered pairs.

    Returns ``(v_within, v_diag, v_off)`` where ``v_within`` includes the
    diagonal (weight 1), ``v_diag`` is the pure diagonal term, and
    ``v_off`` is their difference (possibly negative).
    """
    if h_n <= 0:
        raise ParameterError(f"bandwidth must be positive, got {h_n}")
    c = as_vector(centered, "centered")
    n = c.size
    coords = as_matrix(coords, "coords", n_rows=n, n_cols=2)

    if dists is not None:
        quad = float(c @ (kernel_weights(dists, h_n) @ c))
    elif n <= _BLOCK_ROWS:
        quad = float(c @ (kernel_weights(cdist(coords, coords), h_n) @ c))
    else:
        quad = 0.0
        for start in range(0, n, _BLOCK_ROWS):
            block = slice(start, min(start + _BLOCK_ROWS, n))
            w = kernel_weights(cdist(coords[block], coords), h_n)
            quad += float(c[block] @ (w @ c))

    v_within = quad / n**2
    v_diag = float(c @ c) / n**2
    return v_within, v_diag, v_within - v_diag


def between_fold_term(sv: ScoreVector, fold_means, fold_sizes) -> float:
    """ANOVA-style between-fold variance component."""
    k = fold_means.shape[0]
    if k < 2:
        raise ParameterError("between-fold term needs at least 2 folds")
    n = sv.n
    dev = fold_means - sv.theta_hat
    return float(k / (k - 1) * np.sum((fold_sizes / n) ** 2 * dev**2))


def _effective_bandwidth(h_n: float) -> float:
    return h_n if h_n > 0 else _DEGENERATE_BANDWIDTH


# ---------------------------------------------------------------------------
# variance estimators
# ---------------------------------------------------------------------------


def iid_variance(sv: ScoreVector) -> VarianceEstimate:
    """Sample variance of the scores divided by n."""
    if sv.n < 2:
        raise InsufficientDataError("iid variance needs at least 2 scores")
    sample_var = float(np.var(sv.scores, ddof=1))
    return VarianceEstimate(
        value=sample_var / sv.n,
        method="iid",
        components={"sample_var": sample_var},
    )


def hac_variance(
    sv: ScoreVector,
    coords,
    h_q: float,
    epsilon: float = 1e-12,
    *,
    dists: np.ndarray | None = None,
    condensed: np.ndarray | None = None,
) -> VarianceEstimate:
    """Direct Conley-style HAC variance on globally centered scores.

    The ablation baseline: the full kernel quadratic form (diagonal
    included) applied to ``scores - theta_hat``, with no fold
    correction.
    """
    check_probability(h_q, "h_q")
    h_n = pairwise_distance_quantile(coords, h_q, condensed=condensed)
    centered = sv.scores - sv.theta_hat
    v_within, v_diag, v_off = hac_within(
        centered, coords, _effective_bandwidth(h_n), dists=dists
    )
    return VarianceEstimate(
        value=max(v_within, epsilon),
        method="hac",
        components={
            "v_within": v_within,
            "v_diag": v_diag,
            "v_off": v_off,
            "h_n": h_n,
        },
        floor_applied=v_within < epsilon,
    )


def jk_hac_variance(
    sv: ScoreVector,
    coords,
    h_q: float,
    epsilon: float = 1e-12,
    *,
    dists: np.ndarray | None = None,
    condensed: np.ndarray | None = None,
) -> VarianceEstimate:
    """Jackknife-HAC variance: off-diagonal kernel form on fold-centered
    scores plus the between-fold ANOVA term, floored at ``epsilon``."""
    check_probability(h_q, "h_q")
    if sv.n_folds < 2:
        raise ParameterError("jackknife-HAC needs at least 2 folds")
    centered, fold_means, fold_sizes = fold_center(sv)
    h_n = pairwise_distance_quantile(coords, h_q, condensed=condensed)
    v_within, v_diag, v_off = hac_within(
        centered, coords, _effective_bandwidth(h_n), dists=dists
    )
    v_between = between_fold_term(sv, fold_means, fold_sizes)
    v_jk = v_off + v_between
    return VarianceEstimate(
        value=max(v_jk, epsilon),
        method="jk_hac",
        components={
            "v_within": v_within,
            "v_diag": v_diag,
            "v_off": v_off,
            "v_between": v_between,
            "v_jk": v_jk,
            "h_n": h_n,
        },
        floor_applied=v_jk < epsilon,
    )


def twoway_cgm_variance(centered, g1, g2) -> float:
    """Two-way clustered covariance by inclusion-exclusion cluster sums.

    ``V_g(x) = n^-2 sum over ordered pairs with equal g-label of x_i x_j``,
    i.e. squared cluster sums; the joint term uses the (g1, g2) pair
    label.  The combination may be negative; callers floor downstream.
    """
    x = as_vector(centered, "centered")
    n = x.size
    g1 = np.asarray(g1).reshape(-1)
    g2 = np.asarray(g2).reshape(-1)
    if g1.shape[0] != n or g2.shape[0] != n:
        raise ParameterError("cluster id sequences must match the scores")

    def quadform(inverse) -> float:
        sums = np.bincount(inverse, weights=x)
        return float(sums @ sums) / n**2

    inv1 = np.unique(g1, return_inverse=True)[1].reshape(-1)
    inv2 = np.unique(g2, return_inverse=True)[1].reshape(-1)
    joint = inv1 * (inv2.max() + 1) + inv2
    return quadform(inv1) + quadform(inv2) - quadform(joint)


def twoway_variance(sv: ScoreVector, g1, g2, epsilon: float = 1e-12) -> VarianceEstimate:
    """Plug-in two-way clustered variance on globally centered scores."""
    centered = sv.scores - sv.theta_hat
    v_2way = twoway_cgm_variance(centered, g1, g2)
    return VarianceEstimate(
        value=max(v_2way, epsilon),
        method="twoway",
        components={"v_2way": v_2way},
        floor_applied=v_2way < epsilon,
    )


def jk_twoway_variance(sv: ScoreVector, g1, g2, epsilon: float = 1e-12) -> VarianceEstimate:
    """Jackknife-corrected two-way clustered variance.

    Fold-center the scores, apply the inclusion-exclusion two-way form,
    subtract the diagonal piece, and add the between-fold ANOVA term.
    """
    if sv.n_folds < 2:
        raise ParameterError("jackknife two-way needs at least 2 folds")
    centered, fold_means, fold_sizes = fold_center(sv)
    v_2way = twoway_cgm_variance(centered, g1, g2)
    v_diag = float(centered @ centered) / sv.n**2
    v_between = between_fold_term(sv, fold_means, fold_sizes)
    v_jk = (v_2way - v_diag) + v_between
    return VarianceEstimate(
        value=max(v_jk, epsilon),
        method="jk_twoway",
        components={
            "v_2way": v_2way,
            "v_diag": v_diag,
            "v_off": v_2way - v_diag,
            "v_between": v_between,
            "v_jk": v_jk,
        },
        floor_applied=v_jk < epsilon,
    )


# ---------------------------------------------------------------------------
# Moran gate and interval construction
# ---------------------------------------------------------------------------


def moran_gate(
    ds: SpatialDataset,
    cf: CrossfitResult,
    h_q: float = 0.10,
    permutations: int = 1000,
    gate_level: float = 0.10,
    seed=None,
) -> MoranGateRecord:
    """Labeled-residual Moran pre-test at the HAC bandwidth.

    Rejecting the permutation null (one-sided, positive dependence)
    keeps the spatial branch; otherwise inference downgrades to the iid
    variance with a t critical value.  Constant residuals make the
    statistic undefined; the gate then reports ``spatial=False`` with
    the ``degenerate`` flag rather than raising.
    """
    check_probability(gate_level, "gate_level", open_interval=True)
    lab = ds.labeled
    m = int(lab.sum())
    if m < 3:
        raise InsufficientLabelsError(f"Moran gate needs at least 3 labeled units, got {m}")
    resid = ds.outcome[lab] - cf.m_hat[lab]
    coords = ds.coords[lab]
    h_n = pairwise_distance_quantile(ds.coords, h_q)
    weights = moran_weights(coords, _effective_bandwidth(h_n))
    try:
        stat_fn = lambda r, c: morans_i(r, c, h_n, weights=weights)
        statistic = stat_fn(resid, coords)
        p_value = permutation_pvalue(stat_fn, resid, coords, permutations, seed)
    except (ZeroVarianceError, InsufficientDataError):
        return MoranGateRecord(
            statistic=float("nan"), p_value=float("nan"), spatial=False, degenerate=True
        )
    return MoranGateRecord(
        statistic=statistic, p_value=p_value, spatial=bool(p_value <= gate_level)
    )


def build_interval(
    sv: ScoreVector,
    variance: VarianceEstimate,
    gate: MoranGateRecord | None = None,
    alpha: float = 0.10,
    force_branch: str | None = None,
) -> IntervalReport:
    """Two-sided confidence interval with the branch logic.

    Spatial branch: standard normal critical value on the supplied
    variance.  If a gate is present and did not find spatial signal, the
    variance is replaced by the iid estimate and a Student t critical
    value with K-1 degrees of freedom is used.  ``force_branch`` ("z" or
    "t") overrides the critical value only, leaving the variance as
    chosen.
    """
    check_probability(alpha, "alpha", open_interval=True)
    var_used = variance
    branch = "z_spatial"
    if gate is not None and not gate.spatial:
        var_used = iid_variance(sv)
        branch = "t_iid_gate"
    if force_branch is not None:
        if force_branch not in ("z", "t"):
            raise ParameterError(f"force_branch must be 'z' or 't', got {force_branch!r}")
        branch = "z_spatial" if force_branch == "z" else "t_iid_gate"

    if branch == "z_spatial":
        crit = float(_norm.ppf(1.0 - alpha / 2.0))
    else:
        df = sv.n_folds - 1
        if df < 1:
            raise ParameterError("t critical value needs at least 2 folds")
        crit = float(_student_t.ppf(1.0 - alpha / 2.0, df))

    half = crit * float(np.sqrt(var_used.value))
    return IntervalReport(
        theta_hat=sv.theta_hat,
        variance=var_used,
        critical_branch=branch,
        alpha=float(alpha),
        lo=sv.theta_hat - half,
        hi=sv.theta_hat + half,
        gate=gate,
    )
