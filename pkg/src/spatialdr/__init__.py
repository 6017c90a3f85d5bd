"""Doubly robust mean estimation with predicted labels under MAR labeling
and spatial dependence, with a jackknife-HAC variance correction."""

from .crossfit import CrossfitResult, crossfit_nuisances, standardize_columns
from .dataset import (
    DistanceSummary,
    SpatialDataset,
    load_dataset_csv,
    pairwise_distance_quantile,
    pairwise_distances,
    save_dataset_csv,
    summarize_distances,
    triangular_kernel,
)
from .diagnostics import (
    OverlapReport,
    morans_i,
    nn_residual_correlation,
    overlap_report,
    permutation_pvalue,
    semivariogram,
)
from .folds import FoldPlan, assign_folds, build_fold_plan
from .inference import METHODS, SpatialDRMean
from .learners import GradientBoosting, LogisticIRLS, RidgeRegression, make_learner
from .scores import ScoreVector, crossppi_estimate, dr_scores, ordered_mean
from .synthgen import (
    GridPopulation,
    TwoWayPopulation,
    assign_labels,
    draw_sample,
    fit_base_predictor,
    generate_population,
    generate_twoway_population,
    mar_propensity,
    smooth_field,
)
from .variance import (
    IntervalReport,
    MoranGateRecord,
    VarianceEstimate,
    build_interval,
    fold_center,
    hac_variance,
    hac_within,
    iid_variance,
    jk_hac_variance,
    jk_twoway_variance,
    moran_gate,
    twoway_cgm_variance,
    twoway_variance,
)

__version__ = "0.1.0"

__all__ = [
    "CrossfitResult",
    "DistanceSummary",
    "FoldPlan",
    "GradientBoosting",
    "GridPopulation",
    "IntervalReport",
    "LogisticIRLS",
    "METHODS",
    "MoranGateRecord",
    "OverlapReport",
    "RidgeRegression",
    "ScoreVector",
    "SpatialDRMean",
    "SpatialDataset",
    "TwoWayPopulation",
    "VarianceEstimate",
    "assign_folds",
    "assign_labels",
    "build_fold_plan",
    "build_interval",
    "crossfit_nuisances",
    "crossppi_estimate",
    "dr_scores",
    "draw_sample",
    "fit_base_predictor",
    "fold_center",
    "generate_population",
    "generate_twoway_population",
    "hac_variance",
    "hac_within",
    "iid_variance",
    "jk_hac_variance",
    "jk_twoway_variance",
    "load_dataset_csv",
    "make_learner",
    "mar_propensity",
    "moran_gate",
    "morans_i",
    "nn_residual_correlation",
    "ordered_mean",
    "overlap_report",
    "pairwise_distance_quantile",
    "pairwise_distances",
    "permutation_pvalue",
    "save_dataset_csv",
    "semivariogram",
    "smooth_field",
    "standardize_columns",
    "summarize_distances",
    "triangular_kernel",
    "twoway_cgm_variance",
    "twoway_variance",
]
