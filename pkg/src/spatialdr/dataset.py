"""Per-unit data container, CSV ingestion, and pairwise-distance utilities.

The record for unit ``i`` is ``(coords_i, features_i, pred_i, labeled_i,
outcome_i)`` where ``outcome_i`` is observed if and only if ``labeled_i``
is true.  Unlabeled outcomes are stored as NaN.  All downstream modules
(folds, cross-fitting, variance, diagnostics) consume this container.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import (
    ConsistencyError,
    InsufficientDataError,
    ParameterError,
    ParseError,
    SchemaError,
)
from .validation import as_matrix, as_vector, check_probability, readonly

MISSING_TOKENS = ("", "NA")

#: Pair counts above this threshold may be subsampled when a quantile is
#: requested with ``max_pairs`` set; exact computation is the default.
DEFAULT_PAIR_SUBSAMPLE_THRESHOLD = 20_000


@dataclass(frozen=True)
class SpatialDataset:
    """Immutable per-unit records for spatial estimation.

    Attributes
    ----------
    coords : (n, 2) array
        Spatial (or proxy) coordinates.
    features : (n, p) array
        Observed covariates; ``p`` may be zero.
    pred : (n,) array
        Predicted outcome for every unit.
    labeled : (n,) bool array
        Whether the true outcome was observed.
    outcome : (n,) array
        Observed outcome; NaN exactly where ``labeled`` is false.
    """

    coords: np.ndarray
    features: np.ndarray
    pred: np.ndarray
    labeled: np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        coords = as_matrix(self.coords, "coords", n_cols=2)
        n = coords.shape[0]
        if n < 1:
            raise ParameterError("dataset must contain at least one unit")
        features = as_matrix(self.features, "features", n_rows=n)
        pred = as_vector(self.pred, "pred", n)
        labeled = np.asarray(self.labeled, dtype=bool)
        if labeled.shape != (n,):
            raise ParameterError(f"labeled must have length {n}")
        outcome = as_vector(self.outcome, "outcome", n)

        for name, arr in (("coords", coords), ("features", features), ("pred", pred)):
            if not np.all(np.isfinite(arr)):
                raise ConsistencyError(f"{name} contains non-finite entries")
        finite = np.isfinite(outcome)
        if not np.array_equal(finite, labeled):
            bad = int(np.argmax(finite != labeled))
            raise ConsistencyError(
                f"unit {bad}: outcome must be present exactly when labeled "
                f"(labeled={bool(labeled[bad])}, outcome={outcome[bad]!r})"
            )

        object.__setattr__(self, "coords", readonly(coords))
        object.__setattr__(self, "features", readonly(features))
        object.__setattr__(self, "pred", readonly(pred))
        object.__setattr__(self, "labeled", readonly(labeled))
        object.__setattr__(self, "outcome", readonly(outcome))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_labeled(self) -> int:
        return int(self.labeled.sum())


@dataclass(frozen=True)
class DistanceSummary:
    """Quantile table of pairwise distances plus pair bookkeeping."""

    quantile_table: dict = field(default_factory=dict)
    min_pair_distance: float = float("nan")
    n_pairs: int = 0


def triangular_kernel(u):
    """Triangular kernel ``max(1 - u, 0)`` on nonnegative arguments.

    Accepts scalars or arrays; raises on any negative input.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0):
        raise ParameterError("kernel argument must be nonnegative")
    out = np.maximum(1.0 - arr, 0.0)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def kernel_weights(dists: np.ndarray, h_n: float) -> np.ndarray:
    """Triangular kernel weights ``kappa(d / h_n)`` for a distance array.

    ``h_n == 0`` degenerates gracefully: coincident pairs (d == 0) keep
    weight 1 while any positive distance gets weight 0, matching the
    limit of shrinking bandwidths.
    """
    if h_n < 0:
        raise ParameterError("bandwidth must be nonnegative")
    d = np.asarray(dists, dtype=float)
    if h_n == 0.0:
        return (d == 0.0).astype(float)
    return np.maximum(1.0 - d / h_n, 0.0)


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """Full n-by-n Euclidean distance matrix."""
    coords = as_matrix(coords, "coords", n_cols=2)
    return cdist(coords, coords)


def pairwise_distance_quantile(
    coords: np.ndarray,
    q: float,
    *,
    condensed: np.ndarray | None = None,
    max_pairs: int | None = None,
    seed=None,
) -> float:
    """Nearest-rank quantile of the upper-triangle pairwise distances.

    Uses the ceil(q*N)-th order statistic of the N = n(n-1)/2 distinct
    pair distances, with q = 0 mapping to the minimum.  When ``max_pairs``
    is given and N exceeds it, the quantile is computed on a seeded
    uniform subsample of pairs; the default is exact.

    Parameters
    ----------
    condensed : optional precomputed ``pdist`` output, reused when the
        caller already paid for the distances.
    """
    q = check_probability(q, "q")
    if condensed is None:
        coords = as_matrix(coords, "coords", n_cols=2)
        n = coords.shape[0]
        if n < 2:
            raise InsufficientDataError("need at least 2 points for pairwise distances")
        n_pairs = n * (n - 1) // 2
        if max_pairs is not None and n_pairs > max_pairs:
            rng = np.random.default_rng(seed)
            i = rng.integers(0, n, size=max_pairs)
            j = rng.integers(0, n - 1, size=max_pairs)
            j = np.where(j >= i, j + 1, j)
            d = np.linalg.norm(coords[i] - coords[j], axis=1)
        else:
            d = pdist(coords)
    else:
        d = np.asarray(condensed, dtype=float)
        if d.size < 1:
            raise InsufficientDataError("need at least one pair distance")
    d = np.sort(d)
    rank = max(1, math.ceil(q * d.size))
    return float(d[rank - 1])


def summarize_distances(coords: np.ndarray, probs=(0.0, 0.05, 0.10, 0.25, 0.5, 0.75, 0.9, 1.0)) -> DistanceSummary:
    """Distance quantile table used when picking buffers and bandwidths."""
    coords = as_matrix(coords, "coords", n_cols=2)
    if coords.shape[0] < 2:
        raise InsufficientDataError("need at least 2 points for pairwise distances")
    d = pdist(coords)
    table = {
        float(p): pairwise_distance_quantile(coords, p, condensed=d) for p in probs
    }
    return DistanceSummary(
        quantile_table=table,
        min_pair_distance=float(d.min()),
        n_pairs=int(d.size),
    )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_cell(raw: str, column: str, row: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(
            f"row {row}: column {column!r} has non-numeric value {raw!r}"
        ) from None


def _parse_label(raw: str, column: str, row: int) -> bool:
    token = raw.strip().lower()
    if token in ("1", "true"):
        return True
    if token in ("0", "false"):
        return False
    raise ParseError(f"row {row}: column {column!r} has non-boolean value {raw!r}")


def load_dataset_csv(path, column_map: dict) -> SpatialDataset:
    """Read a dataset from CSV using an explicit column-role mapping.

    ``column_map`` keys: ``coords`` (two column names), ``features``
    (zero or more names), ``pred``, ``label``, ``outcome`` (one name
    each).  Outcome cells may be empty or the literal ``NA`` on
    unlabeled rows.  Row indices in error messages are 1-based data
    rows (the header is row 0).
    """
    coord_cols = list(column_map.get("coords", ()))
    feature_cols = list(column_map.get("features", ()))
    pred_col = column_map.get("pred")
    label_col = column_map.get("label")
    outcome_col = column_map.get("outcome")
    if len(coord_cols) != 2:
        raise SchemaError("column_map must name exactly two coordinate columns")
    if not pred_col or not label_col or not outcome_col:
        raise SchemaError("column_map must name pred, label, and outcome columns")

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = coord_cols + feature_cols + [pred_col, label_col, outcome_col]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"missing columns in {path}: {missing}")

        coords, features, pred, labeled, outcome = [], [], [], [], []
        for row_idx, row in enumerate(reader, start=1):
            coords.append([_parse_cell(row[c], c, row_idx) for c in coord_cols])
            features.append([_parse_cell(row[c], c, row_idx) for c in feature_cols])
            pred.append(_parse_cell(row[pred_col], pred_col, row_idx))
            lab = _parse_label(row[label_col], label_col, row_idx)
            labeled.append(lab)
            raw = (row[outcome_col] or "").strip()
            if raw in MISSING_TOKENS:
                if lab:
                    raise ConsistencyError(
                        f"row {row_idx}: labeled row has empty outcome cell"
                    )
                outcome.append(float("nan"))
            else:
                outcome.append(_parse_cell(raw, outcome_col, row_idx))

    if not coords:
        raise InsufficientDataError(f"{path} contains no data rows")
    n = len(coords)
    return SpatialDataset(
        coords=np.asarray(coords, dtype=float),
        features=np.asarray(features, dtype=float).reshape(n, len(feature_cols)),
        pred=np.asarray(pred, dtype=float),
        labeled=np.asarray(labeled, dtype=bool),
        outcome=np.asarray(outcome, dtype=float),
    )


def save_dataset_csv(ds: SpatialDataset, path, column_map: dict | None = None) -> dict:
    """Write a dataset to CSV; returns the column map used.

    Uses ``repr`` formatting so a round-trip through
    :func:`load_dataset_csv` reproduces every finite value bit-for-bit.
    """
    if column_map is None:
        column_map = {
            "coords": ["coord_x", "coord_y"],
            "features": [f"f{i + 1}" for i in range(ds.p)],
            "pred": "yhat",
            "label": "r",
            "outcome": "y",
        }
    header = (
        list(column_map["coords"])
        + list(column_map["features"])
        + [column_map["pred"], column_map["label"], column_map["outcome"]]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.coords[i]]
            row += [repr(float(v)) for v in ds.features[i]]
            row.append(repr(float(ds.pred[i])))
            row.append("1" if ds.labeled[i] else "0")
            row.append(repr(float(ds.outcome[i])) if ds.labeled[i] else "")
            writer.writerow(row)
    return column_map
