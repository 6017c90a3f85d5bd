"""Per-unit doubly robust scores and point estimators.

The uncentered score for unit ``i`` is ``m_i + R_i (Y_i - m_i) / pi_i``;
its mean identifies the population mean when either nuisance is correct.
The Cross-PPI comparator (prediction mean plus labeled residual mean) is
included as the iid baseline it is: it ignores covariate-dependent
labeling and carries the associated selection bias under MAR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossfit import CrossfitResult
from .dataset import SpatialDataset
from .exceptions import InsufficientLabelsError, ParameterError
from .validation import readonly


def ordered_mean(values) -> float:
    """Arithmetic mean with a fixed left-to-right accumulation order.

    Keeps point estimates bit-reproducible across BLAS builds and
    parallel schedules.
    """
    total = 0.0
    count = 0
    for v in np.asarray(values, dtype=float):
        total += float(v)
        count += 1
    if count == 0:
        raise ParameterError("mean of empty sequence")
    return total / count


@dataclass(frozen=True)
class ScoreVector:
    """Uncentered DR scores with fold provenance."""

    scores: np.ndarray
    fold_of: np.ndarray
    theta_hat: float

    @classmethod
    def build(cls, scores, fold_of) -> "ScoreVector":
        scores = np.asarray(scores, dtype=float).reshape(-1)
        fold_of = np.asarray(fold_of, dtype=int).reshape(-1)
        if fold_of.shape != scores.shape:
            raise ParameterError("scores and fold labels must align")
        if not np.all(np.isfinite(scores)):
            raise ParameterError("scores contain non-finite entries")
        return cls(
            scores=readonly(scores),
            fold_of=readonly(fold_of),
            theta_hat=ordered_mean(scores),
        )

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def n_folds(self) -> int:
        return int(self.fold_of.max())


def dr_scores(ds: SpatialDataset, cf: CrossfitResult) -> ScoreVector:
    """Uncentered doubly robust scores from out-of-fold nuisances.

    Unlabeled units contribute their outcome-model value alone; labeled
    units add the inverse-propensity weighted residual.
    """
    n = ds.n
    if cf.m_hat.shape[0] != n:
        raise ParameterError("crossfit result does not match dataset size")
    scores = cf.m_hat.copy()
    lab = ds.labeled
    scores[lab] += (ds.outcome[lab] - cf.m_hat[lab]) / cf.pi_hat[lab]
    return ScoreVector.build(scores, cf.fold_plan.assignment)


def crossppi_estimate(ds: SpatialDataset) -> tuple[float, float]:
    """Cross-PPI style point estimate and plug-in variance.

    Point: mean of predictions over all units plus mean residual over
    labeled units.  Variance: the two-term influence plug-in
    ``Var(pred)/n + Var(residual)/n_labeled`` with sample variances.
    """
    lab = ds.labeled
    n_lab = int(lab.sum())
    if n_lab < 2:
        raise InsufficientLabelsError(
            f"Cross-PPI needs at least 2 labeled units, got {n_lab}"
        )
    resid = ds.outcome[lab] - ds.pred[lab]
    point = ordered_mean(ds.pred) + ordered_mean(resid)
    variance = float(np.var(ds.pred, ddof=1)) / ds.n + float(
        np.var(resid, ddof=1)
    ) / n_lab
    return point, variance
