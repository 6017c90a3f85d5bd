"""Residual dependence tests and overlap / effective-sample-size reports.

These checks answer two questions before trusting spatial inference on a
given dataset: is residual dependence actually visible in the analysis
coordinates (Moran's I, nearest-neighbor correlation, semivariogram),
and does the labeling mechanism leave enough overlap (propensity tails,
clipping rate, inverse-propensity effective sample size)?
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import kernel_weights
from .exceptions import (
    InsufficientDataError,
    InsufficientLabelsError,
    ParameterError,
    ZeroVarianceError,
)
from .validation import as_matrix, as_vector


def _nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(q * v.size))
    return float(v[rank - 1])


def moran_weights(coords: np.ndarray, h_n: float) -> np.ndarray:
    """Triangular-kernel spatial weights with a zero diagonal."""
    coords = as_matrix(coords, "coords", n_cols=2)
    w = kernel_weights(cdist(coords, coords), h_n)
    np.fill_diagonal(w, 0.0)
    return w


def morans_i(residuals, coords, h_n: float, *, weights: np.ndarray | None = None) -> float:
    """Global Moran's I with kernel weights at bandwidth ``h_n``.

    ``I = (m / S0) * (sum_ij w_ij r~_i r~_j) / (sum_i r~_i^2)`` with
    centered residuals, no row standardization.  Pass ``weights`` to
    reuse a precomputed matrix across permutation draws.
    """
    r = as_vector(residuals, "residuals")
    m = r.size
    if m < 3:
        raise InsufficientDataError(f"Moran's I needs at least 3 units, got {m}")
    if weights is None:
        weights = moran_weights(coords, h_n)
    elif weights.shape != (m, m):
        raise ParameterError("weights must be square and match the residuals")
    rc = r - r.mean()
    denom = rc @ rc
    if denom == 0.0:
        raise ZeroVarianceError("residuals are constant; Moran's I undefined")
    s0 = weights.sum()
    if s0 == 0.0:
        raise InsufficientDataError("no pairs within the kernel bandwidth")
    return float((m / s0) * (rc @ (weights @ rc)) / denom)


def permutation_pvalue(statistic_fn, residuals, coords, draws: int, seed=None) -> float:
    """One-sided upper permutation p-value with the +1 correction.

    ``(1 + #{permuted >= observed}) / (draws + 1)``, permuting residuals
    over locations with a seeded generator.
    """
    if draws < 19:
        raise ParameterError(f"need at least 19 permutation draws, got {draws}")
    r = as_vector(residuals, "residuals")
    observed = statistic_fn(r, coords)
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(draws):
        perm = rng.permutation(r.size)
        if statistic_fn(r[perm], coords) >= observed:
            exceed += 1
    return (1 + exceed) / (draws + 1)


def nn_residual_correlation(residuals, coords) -> float:
    """Pearson correlation between residuals and their nearest neighbor's.

    The neighbor relation is directed: nn(i) is the strict nearest
    neighbor of i (self excluded), ties broken by lowest index.
    """
    r = as_vector(residuals, "residuals")
    m = r.size
    if m < 3:
        raise InsufficientDataError(f"need at least 3 units, got {m}")
    d = cdist(as_matrix(coords, "coords", n_rows=m, n_cols=2), coords)
    np.fill_diagonal(d, np.inf)
    nn = d.argmin(axis=1)
    a = r - r.mean()
    b = r[nn] - r[nn].mean()
    sa = math.sqrt(a @ a)
    sb = math.sqrt(b @ b)
    if sa == 0.0 or sb == 0.0:
        raise ZeroVarianceError("constant residuals; correlation undefined")
    return float((a @ b) / (sa * sb))


def semivariogram(residuals, coords, bins: int = 12):
    """Binned empirical semivariogram of residuals.

    gamma(bin) = 0.5 * mean over pairs in the bin of (r_i - r_j)^2, with
    equal-width bins over (0, max distance].  Returns a list of
    ``(bin_center, gamma, n_pairs)`` rows; empty bins are omitted.
    """
    if bins < 2:
        raise ParameterError(f"need at least 2 bins, got {bins}")
    r = as_vector(residuals, "residuals")
    m = r.size
    coords = as_matrix(coords, "coords", n_rows=m, n_cols=2)
    iu, ju = np.triu_indices(m, k=1)
    d = np.linalg.norm(coords[iu] - coords[ju], axis=1)
    sq = 0.5 * (r[iu] - r[ju]) ** 2
    positive = d > 0
    d, sq = d[positive], sq[positive]
    if d.size == 0:
        return []
    dmax = d.max()
    edges = np.linspace(0.0, dmax, bins + 1)
    # right-inclusive bins over (0, dmax]
    idx = np.clip(np.searchsorted(edges, d, side="left") - 1, 0, bins - 1)
    table = []
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        center = float(0.5 * (edges[b] + edges[b + 1]))
        table.append((center, float(sq[mask].mean()), count))
    return table


@dataclass(frozen=True)
class OverlapReport:
    """Propensity-tail and effective-sample-size summary."""

    pi_q05_design: float
    pi_q05_estimated: float
    clip_rate: float
    ess_ratio: float
    n_labeled: int

    def to_dict(self) -> dict:
        return {
            "pi_q05_design": self.pi_q05_design,
            "pi_q05_estimated": self.pi_q05_estimated,
            "clip_rate": self.clip_rate,
            "ess_ratio": self.ess_ratio,
            "n_labeled": self.n_labeled,
        }


def overlap_report(design_pi, estimated_pi, labeled, pi_min: float) -> OverlapReport:
    """Overlap diagnostics on (clipped) estimated and optional design propensities.

    Clipped values sit exactly on the bounds, so the clipping rate is
    recovered as the fraction of estimated propensities at or beyond
    ``[pi_min, 1 - pi_min]``.  ESS uses inverse-propensity weights over
    labeled units: ``(sum w)^2 / sum w^2``.
    """
    est = as_vector(estimated_pi, "estimated_pi")
    lab = np.asarray(labeled, dtype=bool).reshape(-1)
    if lab.shape[0] != est.shape[0]:
        raise ParameterError("labeled mask must align with estimated_pi")
    n_lab = int(lab.sum())
    if n_lab == 0:
        raise InsufficientLabelsError("overlap report needs at least one labeled unit")
    w = 1.0 / est[lab]
    ess = float((w.sum() ** 2) / (w @ w))
    clip_rate = float(np.mean((est <= pi_min) | (est >= 1.0 - pi_min)))
    q05_design = (
        float("nan")
        if design_pi is None
        else _nearest_rank_quantile(as_vector(design_pi, "design_pi", est.size), 0.05)
    )
    return OverlapReport(
        pi_q05_design=q05_design,
        pi_q05_estimated=_nearest_rank_quantile(est, 0.05),
        clip_rate=clip_rate,
        ess_ratio=ess / n_lab,
        n_labeled=n_lab,
    )
