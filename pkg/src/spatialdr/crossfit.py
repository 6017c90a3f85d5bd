"""Cross-fitting orchestrator producing out-of-fold nuisance values.

For each fold, the outcome model is fit on the labeled units of the
fold's (buffered) training set and the propensity model on all of them;
both are evaluated on the held-out fold only, so unit ``i``'s nuisance
values never see row ``i``'s outcome or label.  Designs are standardized
with training-fold statistics to avoid leaking held-out moments.
Propensities are clipped to ``[pi_min, 1 - pi_min]``; oracle overrides
(known design propensities, or a constant rate) bypass estimation but
are clipped the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SpatialDataset
from .exceptions import NuisanceStarvationError, ParameterError
from .folds import FoldPlan
from .learners import LogisticIRLS, RidgeRegression
from .validation import readonly, seed_sequence

PI_SOURCES = ("estimated", "oracle_mar", "oracle_mcar_constant")


@dataclass(frozen=True)
class CrossfitResult:
    """Out-of-fold nuisance values aligned with a dataset.

    ``pi_raw`` keeps the pre-clipping propensities for overlap
    diagnostics; ``pi_hat`` is clipped to ``[pi_min, 1 - pi_min]``.
    """

    m_hat: np.ndarray
    pi_hat: np.ndarray
    pi_raw: np.ndarray
    fold_plan: FoldPlan
    pi_source: str
    m_source: str
    pi_min: float
    separation_flags: tuple


def standardize_columns(train: np.ndarray, apply_to: np.ndarray | None = None):
    """Z-score columns by training mean/sd; zero-variance columns map to 0."""
    mean = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    target = train if apply_to is None else apply_to
    return (target - mean) / sd


def nuisance_design(ds: SpatialDataset) -> np.ndarray:
    """Raw design for both nuisances: [features, pred, coords]."""
    return np.column_stack([ds.features, ds.pred, ds.coords])


def crossfit_nuisances(
    ds: SpatialDataset,
    plan: FoldPlan,
    m_learner=None,
    pi_learner=None,
    pi_min: float = 0.10,
    pi_override=None,
    m_override=None,
    seed=None,
) -> CrossfitResult:
    """Fit nuisances fold by fold and evaluate them out of fold.

    ``pi_override`` (per-unit design propensities) is clipped and used
    verbatim; a constant override is recorded as the MCAR oracle branch.
    ``m_override`` replaces the outcome model the same way, used when an
    external prediction is taken directly as the calibrated mean.
    """
    if not 0.0 < pi_min < 0.5:
        raise ParameterError(f"pi_min must lie in (0, 0.5), got {pi_min}")
    n = ds.n
    if plan.n != n:
        raise ParameterError("fold plan does not match dataset size")
    if m_learner is None:
        m_learner = RidgeRegression(lam=1e-3)
    if pi_learner is None:
        pi_learner = LogisticIRLS(lam=1e-6)

    design = nuisance_design(ds)
    m_hat = np.empty(n)
    pi_raw = np.empty(n)
    separation = []

    fit_m = m_override is None
    fit_pi = pi_override is None
    seeds = seed_sequence(seed).spawn(plan.n_folds)

    if fit_m or fit_pi:
        for k in range(1, plan.n_folds + 1):
            held = plan.held_out(k)
            train = plan.train_sets[k - 1]
            X_train = design[train]
            X_held = standardize_columns(X_train, design[held])
            X_train_z = standardize_columns(X_train)
            fold_seed = seeds[k - 1]

            if fit_m:
                lab = ds.labeled[train]
                if not lab.any():
                    raise NuisanceStarvationError(
                        f"fold {k}: buffered training set has no labeled units; "
                        "lower q_b or the fold count"
                    )
                model = _seeded_clone(m_learner, fold_seed)
                model.fit(X_train_z[lab], ds.outcome[train][lab])
                m_hat[held] = model.predict(X_held)

            if fit_pi:
                model = _seeded_clone(pi_learner, fold_seed)
                model.fit(X_train_z, ds.labeled[train].astype(float))
                pi_raw[held] = model.predict(X_held)
                if getattr(model, "separation_flag_", False):
                    separation.append(k)

    if not fit_m:
        m_hat = np.asarray(m_override, dtype=float).reshape(-1)
        if m_hat.shape[0] != n:
            raise ParameterError(f"m_override must have length {n}")
    if not fit_pi:
        pi_raw = np.asarray(pi_override, dtype=float).reshape(-1)
        if pi_raw.shape[0] != n:
            raise ParameterError(f"pi_override must have length {n}")
        constant = np.all(pi_raw == pi_raw[0])
        pi_source = "oracle_mcar_constant" if constant else "oracle_mar"
    else:
        pi_source = "estimated"

    pi_hat = np.clip(pi_raw, pi_min, 1.0 - pi_min)
    return CrossfitResult(
        m_hat=readonly(m_hat),
        pi_hat=readonly(pi_hat),
        pi_raw=readonly(np.asarray(pi_raw, dtype=float)),
        fold_plan=plan,
        pi_source=pi_source,
        m_source="estimated" if fit_m else "external_pred",
        pi_min=float(pi_min),
        separation_flags=tuple(separation),
    )


def _seeded_clone(learner, seed_seq):
    """Fresh copy of a learner, reseeded when it consumes randomness."""
    params = learner.get_params()
    clone = type(learner)(**params)
    if "seed" in params:
        clone.set_params(seed=seed_seq)
    return clone
