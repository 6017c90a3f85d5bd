"""Seeded generators for the two synthetic designs.

Grid design: smoothed Gaussian random fields on an n_side x n_side grid,
a linear outcome with an observed and an unobserved field component, a
gradient-boosted base predictor trained on a disjoint auxiliary split,
iid or soft-block sample draws, and MCAR or calibrated MAR labeling.
The smoothing radius controls the dependence range: the unobserved field
is withheld from the predictor, so prediction residuals stay spatially
correlated at high smoothing.

Two-way design: overlapping cluster shocks on two independent label
dimensions, for the clustered (non-spatial) variance extension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import expit

from .crossfit import standardize_columns
from .exceptions import (
    InfeasibleTargetError,
    ParameterError,
    SolverError,
)
from .learners import GradientBoosting
from .validation import check_probability, readonly, seed_sequence

GRID_MU = 0.0
GRID_BETA = 0.8
GRID_LAMBDA = 1.0
GRID_EPS_SD = 0.6
X_FIELD_RADIUS = 2.0

MAR_BASE_STRENGTH = 1.5
#: score coefficients at strength 1.5: three feature terms, two coordinate
#: terms, three interactions, one prediction term.
MAR_COEFFS = {
    "f1": 1.425,
    "f2": 1.125,
    "f3": 0.525,
    "c1": 0.825,
    "c2": -0.825,
    "f1c1": 0.600,
    "c1c2": 0.525,
    "f2c2": 0.450,
    "s": 1.350,
}


@dataclass(frozen=True)
class GridPopulation:
    """One realization of the gridded spatial population."""

    side: int
    sigma: float
    coords: np.ndarray
    x_field: np.ndarray
    u_obs: np.ndarray
    u_unobs: np.ndarray
    eps: np.ndarray
    y: np.ndarray
    mu_true: float = GRID_MU
    beta: float = GRID_BETA
    lam: float = GRID_LAMBDA
    eps_sd: float = GRID_EPS_SD

    @property
    def n_units(self) -> int:
        return self.side**2


@dataclass(frozen=True)
class TwoWayPopulation:
    """Population with two overlapping cluster-shock dimensions."""

    g1: np.ndarray
    g2: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u_shocks: np.ndarray
    v_shocks: np.ndarray
    eps: np.ndarray
    dep_scale: float
    mu_true: float = GRID_MU
    beta: float = GRID_BETA
    eps_sd: float = GRID_EPS_SD


def _disk_kernel(sigma: float) -> np.ndarray:
    radius = int(np.floor(sigma))
    offsets = np.arange(-radius, radius + 1)
    di, dj = np.meshgrid(offsets, offsets, indexing="ij")
    return (di**2 + dj**2 <= sigma**2).astype(float)


def smooth_field(side: int, sigma: float, seed=None) -> np.ndarray:
    """Standardized disk-mean smoothed Gaussian field, raveled row-major.

    An iid standard normal grid is convolved with a uniform disk of the
    given cell radius (truncated at the boundary with weights
    renormalized), then centered to mean 0 and rescaled to sd 1.
    ``sigma = 0`` returns the raw standardized field.
    """
    if side < 1:
        raise ParameterError("side must be at least 1")
    if sigma < 0:
        raise ParameterError("smoothing radius must be nonnegative")
    if sigma >= side:
        raise ParameterError(f"smoothing radius {sigma} exceeds grid side {side}")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((side, side))
    if sigma < 1:
        field = raw
    else:
        kernel = _disk_kernel(sigma)
        num = fftconvolve(raw, kernel, mode="same")
        den = fftconvolve(np.ones_like(raw), kernel, mode="same")
        field = num / den
    field = field - field.mean()
    sd = field.std()
    if sd == 0:
        raise SolverError("degenerate field with zero variance")
    return (field / sd).ravel()


def grid_coords(side: int) -> np.ndarray:
    """Grid positions normalized to [0, 1]^2, row-major."""
    pos = np.arange(side) / max(side - 1, 1)
    ii, jj = np.meshgrid(pos, pos, indexing="ij")
    return np.column_stack([ii.ravel(), jj.ravel()])


def generate_population(side: int, sigma: float, seed=None) -> GridPopulation:
    """Draw one population replicate of the gridded design.

    ``y = mu + beta * x + lam * u_obs + lam * u_unobs + eps`` with the
    x field smoothed at a fixed small radius and the two u fields at the
    requested radius; eps is iid Gaussian.
    """
    if side < 8:
        raise ParameterError(f"side must be at least 8, got {side}")
    ss = seed_sequence(seed)
    s_x, s_uo, s_uu, s_eps = ss.spawn(4)
    x_field = smooth_field(side, X_FIELD_RADIUS, s_x)
    u_obs = smooth_field(side, sigma, s_uo)
    u_unobs = smooth_field(side, sigma, s_uu)
    eps = GRID_EPS_SD * np.random.default_rng(s_eps).standard_normal(side**2)
    y = GRID_MU + GRID_BETA * x_field + GRID_LAMBDA * u_obs + GRID_LAMBDA * u_unobs + eps
    return GridPopulation(
        side=side,
        sigma=float(sigma),
        coords=readonly(grid_coords(side)),
        x_field=readonly(x_field),
        u_obs=readonly(u_obs),
        u_unobs=readonly(u_unobs),
        eps=readonly(eps),
        y=readonly(y),
    )


def population_design(pop: GridPopulation) -> np.ndarray:
    """Observed covariates available to the base predictor: (x, u_obs, coords)."""
    return np.column_stack([pop.x_field, pop.u_obs, pop.coords])


def fit_base_predictor(
    pop: GridPopulation,
    aux_frac: float = 0.35,
    seed=None,
    trees: int = 100,
    depth: int = 3,
    rate: float = 0.1,
):
    """Auxiliary-split base predictions for the analysis pool.

    A random ``aux_frac`` share of the population trains a squared-loss
    gradient-boosted predictor on the standardized observed covariates;
    predictions are produced only for the disjoint analysis pool.
    Returns ``(pred, analysis_indices)`` with the index set sorted.
    """
    check_probability(aux_frac, "aux_frac", open_interval=True)
    ss = seed_sequence(seed)
    s_split, s_gbt = ss.spawn(2)
    n = pop.n_units
    n_aux = int(round(aux_frac * n))
    if n_aux < 1 or n_aux >= n:
        raise ParameterError("auxiliary split leaves an empty pool")
    perm = np.random.default_rng(s_split).permutation(n)
    aux = perm[:n_aux]
    analysis = np.sort(perm[n_aux:])

    design = population_design(pop)
    design_aux = design[aux]
    design_analysis = standardize_columns(design_aux, design[analysis])
    model = GradientBoosting(
        loss="squared", trees=trees, depth=depth, rate=rate, seed=s_gbt
    )
    model.fit(standardize_columns(design_aux), pop.y[aux])
    return model.predict(design_analysis), analysis


def draw_sample(
    pool,
    coords: np.ndarray,
    n: int,
    mode: str = "iid",
    core_frac: float = 0.05,
    seed=None,
) -> np.ndarray:
    """Draw ``n`` units from an index pool.

    ``iid``: uniform without replacement.  ``soft_block``: a core of
    ``round(core_frac * n)`` nearest pool neighbors of a uniformly
    chosen anchor unit (distance ties broken by lowest index), with the
    remainder uniform without replacement from the rest of the pool.
    ``core_frac = 0`` reproduces the iid draw for the same seed.
    """
    pool = np.asarray(pool, dtype=int).reshape(-1)
    if n > pool.size:
        raise ParameterError(f"cannot draw {n} units from a pool of {pool.size}")
    if mode not in ("iid", "soft_block"):
        raise ParameterError(f"unknown sampling mode {mode!r}")
    check_probability(core_frac, "core_frac")
    anchor_ss, fill_ss = seed_sequence(seed).spawn(2)
    fill_rng = np.random.default_rng(fill_ss)

    if mode == "iid":
        return np.asarray(fill_rng.choice(pool, size=n, replace=False))

    n_core = int(round(core_frac * n))
    if n_core == 0:
        return np.asarray(fill_rng.choice(pool, size=n, replace=False))
    anchor = int(np.random.default_rng(anchor_ss).choice(pool))
    dist = np.linalg.norm(coords[pool] - coords[anchor], axis=1)
    order = np.lexsort((pool, dist))
    core = pool[order[:n_core]]
    in_core = np.zeros(pool.size, dtype=bool)
    in_core[order[:n_core]] = True
    rest = pool[~in_core]
    fill = fill_rng.choice(rest, size=n - n_core, replace=False)
    return np.concatenate([core, fill])


def mar_score(features_z: np.ndarray, coords_z: np.ndarray, pred_z: np.ndarray, strength: float) -> np.ndarray:
    """Adversarial MAR score from standardized inputs.

    Uses the first three feature columns (absent columns padded with
    zeros), both coordinates, three interactions, and the prediction;
    coefficients scale linearly with ``strength`` relative to the base
    profile.
    """
    features_z = np.asarray(features_z, dtype=float)
    if features_z.ndim == 1:
        features_z = features_z[:, None]
    n = features_z.shape[0]
    f = np.zeros((n, 3))
    take = min(3, features_z.shape[1])
    f[:, :take] = features_z[:, :take]
    coords_z = np.asarray(coords_z, dtype=float).reshape(n, 2)
    s = np.asarray(pred_z, dtype=float).reshape(n)
    c = MAR_COEFFS
    score = (
        c["f1"] * f[:, 0]
        + c["f2"] * f[:, 1]
        + c["f3"] * f[:, 2]
        + c["c1"] * coords_z[:, 0]
        + c["c2"] * coords_z[:, 1]
        + c["f1c1"] * f[:, 0] * coords_z[:, 0]
        + c["c1c2"] * coords_z[:, 0] * coords_z[:, 1]
        + c["f2c2"] * f[:, 1] * coords_z[:, 1]
        + c["s"] * s
    )
    return (strength / MAR_BASE_STRENGTH) * score


def mar_propensity(
    features_z,
    coords_z,
    pred_z,
    strength: float = 1.5,
    target_rate: float = 0.20,
    floor: float = 0.10,
    ceil: float = 0.90,
) -> tuple[np.ndarray, float]:
    """Calibrated MAR propensities ``clip(expit(alpha + S), floor, ceil)``.

    ``alpha`` is solved by bisection so the mean propensity matches the
    target label rate to within 1e-6.  Returns ``(pi, alpha)``.
    """
    if not floor < target_rate < ceil:
        raise InfeasibleTargetError(
            f"target rate {target_rate} must lie strictly inside [{floor}, {ceil}]"
        )
    score = mar_score(features_z, coords_z, pred_z, strength)

    def mean_rate(alpha: float) -> float:
        return float(np.mean(np.clip(expit(alpha + score), floor, ceil)))

    lo, hi = -60.0, 60.0
    if not mean_rate(lo) <= target_rate <= mean_rate(hi):
        raise SolverError("bisection bracket does not contain the target rate")
    alpha = 0.0
    for _ in range(200):
        alpha = 0.5 * (lo + hi)
        rate = mean_rate(alpha)
        if abs(rate - target_rate) <= 1e-6:
            break
        if rate < target_rate:
            lo = alpha
        else:
            hi = alpha
    else:
        raise SolverError("bisection failed to reach the target rate tolerance")
    return np.clip(expit(alpha + score), floor, ceil), float(alpha)


def assign_labels(pi, mode: str, target_rate: float = 0.20, seed=None) -> np.ndarray:
    """Bernoulli label mask: constant rate under MCAR, per-unit under MAR."""
    pi = np.asarray(pi, dtype=float).reshape(-1)
    if np.any((pi < 0) | (pi > 1)):
        raise ParameterError("propensities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    u = rng.random(pi.size)
    if mode == "mcar":
        check_probability(target_rate, "target_rate")
        return u < target_rate
    if mode == "mar":
        return u < pi
    raise ParameterError(f"unknown label mode {mode!r}")


def generate_twoway_population(
    n: int,
    g1_count: int = 20,
    g2_count: int = 20,
    dep_scale: float = 0.0,
    seed=None,
) -> TwoWayPopulation:
    """Population with two overlapping cluster-shock dimensions.

    ``y = mu + beta * x + U_{g1(i)} + V_{g2(i)} + eps`` with mean-zero
    Gaussian shocks of sd ``dep_scale`` on uniformly assigned labels.
    """
    if g1_count < 1 or g2_count < 1:
        raise ParameterError("cluster counts must be at least 1")
    if dep_scale < 0:
        raise ParameterError("dep_scale must be nonnegative")
    ss = seed_sequence(seed)
    s_g1, s_g2, s_u, s_v, s_x, s_eps = ss.spawn(6)
    g1 = np.random.default_rng(s_g1).integers(0, g1_count, size=n)
    g2 = np.random.default_rng(s_g2).integers(0, g2_count, size=n)
    u = dep_scale * np.random.default_rng(s_u).standard_normal(g1_count)
    v = dep_scale * np.random.default_rng(s_v).standard_normal(g2_count)
    x = np.random.default_rng(s_x).standard_normal(n)
    eps = GRID_EPS_SD * np.random.default_rng(s_eps).standard_normal(n)
    y = GRID_MU + GRID_BETA * x + u[g1] + v[g2] + eps
    return TwoWayPopulation(
        g1=readonly(g1),
        g2=readonly(g2),
        x=readonly(x),
        y=readonly(y),
        u_shocks=readonly(u),
        v_shocks=readonly(v),
        eps=readonly(eps),
        dep_scale=float(dep_scale),
    )
