"""Top-level estimator tying the pipeline together, scikit-learn style.

``SpatialDRMean(...).fit(ds)`` runs fold construction, cross-fitting,
scoring, variance estimation, and interval construction for one method,
exposing each stage as a fitted attribute.  Constructor arguments are
plain hyperparameters so ``get_params`` / ``set_params`` work for
config plumbing and grid sweeps.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm as _norm
from sklearn.base import BaseEstimator

from .crossfit import crossfit_nuisances
from .dataset import SpatialDataset, pairwise_distances
from .exceptions import ParameterError
from .validation import seed_sequence
from .folds import build_fold_plan
from .learners import make_learner
from .scores import crossppi_estimate, dr_scores
from .variance import (
    IntervalReport,
    MoranGateRecord,
    VarianceEstimate,
    build_interval,
    hac_variance,
    iid_variance,
    jk_hac_variance,
    jk_twoway_variance,
    moran_gate,
    twoway_variance,
)

METHODS = ("crossppi", "dr-iid", "dr-hac", "dr-jk-hac", "dr-2way", "dr-jk-2way")
TWOWAY_METHODS = ("dr-2way", "dr-jk-2way")


class SpatialDRMean(BaseEstimator):
    """Doubly robust mean estimation with dependence-aware intervals.

    Parameters
    ----------
    method : one of ``crossppi``, ``dr-iid``, ``dr-hac``, ``dr-jk-hac``,
        ``dr-2way``, ``dr-jk-2way``.
    k : fold count for cross-fitting.
    qb : distance quantile setting the fold buffer radius.
    hq : distance quantile setting the kernel bandwidth.
    alpha : two-sided miscoverage level.
    pi_min : propensity clipping bound.
    epsilon : variance floor.
    m_learner, pi_learner : learner registry names (``ridge``/``gbt``
        and ``logistic``/``gbt``).  The two-way methods take the
        external prediction as the outcome model, per their cluster
        pipeline, and only cross-fit the propensity.
    gate : enable the Moran pre-test branch switch.
    critical : ``None`` for the branch default, or force ``"z"``/``"t"``.
    min_train : buffered-training-set size under which a fold falls back
        to plain jackknife folds; defaults to a multiple of the feature
        count.
    seed : master seed for fold assignment and seeded learners.
    """

    def __init__(
        self,
        method: str = "dr-jk-hac",
        k: int = 5,
        qb: float = 0.05,
        hq: float = 0.10,
        alpha: float = 0.10,
        pi_min: float = 0.10,
        epsilon: float = 1e-12,
        m_learner: str = "ridge",
        pi_learner: str = "logistic",
        gate: bool = False,
        gate_level: float = 0.10,
        gate_permutations: int = 1000,
        critical: str | None = None,
        min_train: int | None = None,
        seed=None,
    ):
        self.method = method
        self.k = k
        self.qb = qb
        self.hq = hq
        self.alpha = alpha
        self.pi_min = pi_min
        self.epsilon = epsilon
        self.m_learner = m_learner
        self.pi_learner = pi_learner
        self.gate = gate
        self.gate_level = gate_level
        self.gate_permutations = gate_permutations
        self.critical = critical
        self.min_train = min_train
        self.seed = seed

    def fit(self, ds: SpatialDataset, pi_override=None, g1=None, g2=None):
        """Run the pipeline on a dataset.

        ``pi_override`` supplies known design propensities (clipped and
        used verbatim).  ``g1``/``g2`` are cluster labels, required by
        the two-way methods.
        """
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")

        if self.method == "crossppi":
            point, var = crossppi_estimate(ds)
            crit = float(_norm.ppf(1.0 - self.alpha / 2.0))
            half = crit * float(np.sqrt(var))
            self.theta_ = point
            self.variance_ = VarianceEstimate(value=var, method="iid")
            self.interval_ = IntervalReport(
                theta_hat=point,
                variance=self.variance_,
                critical_branch="z_spatial",
                alpha=float(self.alpha),
                lo=point - half,
                hi=point + half,
            )
            self.scores_ = None
            self.crossfit_ = None
            self.fold_plan_ = None
            self.gate_record_ = None
            self.lo_, self.hi_ = self.interval_.lo, self.interval_.hi
            return self

        ss = seed_sequence(self.seed)
        fold_seed, fit_seed, gate_seed = ss.spawn(3)
        dists = pairwise_distances(ds.coords)
        plan = build_fold_plan(
            ds, self.k, self.qb, min_train=self.min_train, seed=fold_seed, dists=dists
        )

        twoway = self.method in TWOWAY_METHODS
        if twoway and (g1 is None or g2 is None):
            raise ParameterError(f"{self.method} requires g1 and g2 cluster labels")
        cf = crossfit_nuisances(
            ds,
            plan,
            m_learner=make_learner(self.m_learner, task="outcome", seed=fit_seed),
            pi_learner=make_learner(self.pi_learner, task="propensity", seed=fit_seed),
            pi_min=self.pi_min,
            pi_override=pi_override,
            m_override=ds.pred if twoway else None,
            seed=fit_seed,
        )
        sv = dr_scores(ds, cf)

        if self.method == "dr-iid":
            variance = iid_variance(sv)
        elif self.method == "dr-hac":
            variance = hac_variance(sv, ds.coords, self.hq, self.epsilon, dists=dists)
        elif self.method == "dr-jk-hac":
            variance = jk_hac_variance(sv, ds.coords, self.hq, self.epsilon, dists=dists)
        elif self.method == "dr-2way":
            variance = twoway_variance(sv, g1, g2, self.epsilon)
        else:
            variance = jk_twoway_variance(sv, g1, g2, self.epsilon)

        gate_record: MoranGateRecord | None = None
        if self.gate and self.method in ("dr-hac", "dr-jk-hac"):
            gate_record = moran_gate(
                ds,
                cf,
                h_q=self.hq,
                permutations=self.gate_permutations,
                gate_level=self.gate_level,
                seed=gate_seed,
            )

        report: IntervalReport = build_interval(
            sv,
            variance,
            gate=gate_record,
            alpha=self.alpha,
            force_branch=self.critical,
        )
        self.fold_plan_ = plan
        self.crossfit_ = cf
        self.scores_ = sv
        self.variance_ = report.variance
        self.gate_record_ = gate_record
        self.interval_ = report
        self.theta_ = report.theta_hat
        self.lo_, self.hi_ = report.lo, report.hi
        return self
