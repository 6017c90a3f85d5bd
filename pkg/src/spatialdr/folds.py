"""K-fold partitions with distance-buffered training sets.

Random cross-fitting leaks local dependence between folds, so each
fold's training set excludes every unit within a buffer radius of the
held-out fold.  The radius is a low quantile of the pairwise distances.
When the exclusion starves a fold's training set the plan falls back to
plain jackknife folds (the full complement) for that fold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SpatialDataset, pairwise_distance_quantile, pairwise_distances
from .exceptions import ParameterError
from .validation import readonly


@dataclass(frozen=True)
class FoldPlan:
    """Fold assignment plus buffered (or fallback) training index sets.

    ``assignment`` holds 1-based fold labels.  ``train_sets[k]`` are the
    training indices for fold ``k+1``; when ``fallback_used[k]`` is true
    the buffer starved that fold and the full complement is used instead.
    """

    assignment: np.ndarray
    train_sets: tuple
    buffer_radius: float
    fallback_used: tuple

    @property
    def n_folds(self) -> int:
        return len(self.train_sets)

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def held_out(self, k: int) -> np.ndarray:
        """Indices of fold ``k`` (1-based)."""
        return np.flatnonzero(self.assignment == k)


def default_min_train(p: int) -> int:
    """Minimum training-set size before the jackknife fallback kicks in."""
    return max(50, 10 * (p + 3))


def assign_folds(n: int, k: int, seed=None) -> np.ndarray:
    """Uniformly random 1-based fold labels with sizes differing by at most 1."""
    if k < 2 or k > n:
        raise ParameterError(f"fold count must satisfy 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=int)
    base, extra = divmod(n, k)
    start = 0
    for fold in range(1, k + 1):
        size = base + (1 if fold <= extra else 0)
        assignment[perm[start : start + size]] = fold
        start += size
    return assignment


def build_fold_plan(
    ds: SpatialDataset,
    k: int,
    q_b: float,
    min_train: int | None = None,
    seed=None,
    *,
    dists: np.ndarray | None = None,
) -> FoldPlan:
    """Assign folds and build buffered training sets.

    The buffer radius is the ``q_b`` nearest-rank quantile of the sample's
    pairwise distances; training sets keep only units strictly farther
    than the radius from every held-out unit.  Folds whose buffered set
    falls below ``min_train`` fall back to the full complement.
    """
    if not 0.0 <= q_b < 1.0:
        raise ParameterError(f"q_b must lie in [0, 1), got {q_b}")
    n = ds.n
    if min_train is None:
        min_train = default_min_train(ds.p)
    assignment = assign_folds(n, k, seed)
    if dists is None:
        dists = pairwise_distances(ds.coords)
    condensed = dists[np.triu_indices(n, 1)]
    r_n = pairwise_distance_quantile(ds.coords, q_b, condensed=condensed)

    train_sets = []
    fallback = []
    for fold in range(1, k + 1):
        held = assignment == fold
        others = ~held
        # strict inequality: units exactly at the radius are excluded too
        min_dist_to_held = dists[:, held].min(axis=1)
        buffered = others & (min_dist_to_held > r_n)
        if buffered.sum() < min_train:
            train_sets.append(readonly(np.flatnonzero(others)))
            fallback.append(True)
        else:
            train_sets.append(readonly(np.flatnonzero(buffered)))
            fallback.append(False)

    return FoldPlan(
        assignment=readonly(assignment),
        train_sets=tuple(train_sets),
        buffer_radius=float(r_n),
        fallback_used=tuple(fallback),
    )
