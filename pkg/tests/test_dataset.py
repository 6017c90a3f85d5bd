import numpy as np
import pytest

from spatialdr import (
    SpatialDataset,
    load_dataset_csv,
    pairwise_distance_quantile,
    save_dataset_csv,
    summarize_distances,
    triangular_kernel,
)
from spatialdr.exceptions import (
    ConsistencyError,
    InsufficientDataError,
    ParameterError,
    ParseError,
    SchemaError,
)


def make_dataset(n=20, p=2, label_rate=0.5, seed=0):
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    features = rng.standard_normal((n, p))
    pred = rng.standard_normal(n)
    labeled = rng.random(n) < label_rate
    labeled[0] = True  # at least one label
    outcome = np.where(labeled, rng.standard_normal(n), np.nan)
    return SpatialDataset(
        coords=coords, features=features, pred=pred, labeled=labeled, outcome=outcome
    )


class TestSpatialDataset:
    def test_valid_construction(self):
        ds = make_dataset(n=13, p=3)
        assert ds.n == 13 and ds.p == 3
        assert ds.coords.flags.writeable is False

    def test_outcome_must_match_label(self):
        with pytest.raises(ConsistencyError):
            SpatialDataset(
                coords=[[0, 0], [1, 1]],
                features=np.zeros((2, 1)),
                pred=[0.0, 0.0],
                labeled=[True, False],
                outcome=[np.nan, np.nan],
            )
        with pytest.raises(ConsistencyError):
            SpatialDataset(
                coords=[[0, 0], [1, 1]],
                features=np.zeros((2, 1)),
                pred=[0.0, 0.0],
                labeled=[False, False],
                outcome=[1.0, np.nan],
            )

    def test_nonfinite_rejected(self):
        with pytest.raises(ConsistencyError):
            SpatialDataset(
                coords=[[0, np.inf]],
                features=np.zeros((1, 0)),
                pred=[0.0],
                labeled=[True],
                outcome=[1.0],
            )

    def test_zero_features_allowed(self):
        ds = SpatialDataset(
            coords=[[0, 0]],
            features=np.zeros((1, 0)),
            pred=[2.0],
            labeled=[True],
            outcome=[3.0],
        )
        assert ds.p == 0 and ds.n == 1


class TestTriangularKernel:
    def test_pointwise_values(self):
        assert triangular_kernel(0.0) == 1.0
        assert triangular_kernel(0.5) == 0.5
        assert triangular_kernel(2.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            triangular_kernel(-0.1)

    def test_bounds_and_monotone(self):
        u = np.linspace(0, 3, 301)
        k = triangular_kernel(u)
        assert np.all((0 <= k) & (k <= 1))
        assert np.all(np.diff(k) <= 0)


class TestDistanceQuantile:
    def test_single_pair(self):
        assert pairwise_distance_quantile(np.array([[0, 0], [1, 0]]), 0.5) == 1.0

    def test_max_of_three_pairs(self):
        coords = np.array([[0, 0], [1, 0], [3, 0]])
        # pairs: 1, 2, 3 -> max
        assert pairwise_distance_quantile(coords, 1.0) == 3.0

    def test_coincident_points(self):
        assert pairwise_distance_quantile(np.array([[0, 0], [0, 0]]), 0.5) == 0.0

    def test_q_zero_is_minimum(self):
        coords = np.array([[0, 0], [1, 0], [3, 0]])
        assert pairwise_distance_quantile(coords, 0.0) == 1.0

    def test_nearest_rank_matches_enumeration(self):
        rng = np.random.default_rng(1)
        coords = rng.random((9, 2))
        d = sorted(
            float(np.linalg.norm(coords[i] - coords[j]))
            for i in range(9)
            for j in range(i + 1, 9)
        )
        for q in (0.01, 0.25, 0.5, 0.77, 1.0):
            rank = max(1, int(np.ceil(q * len(d))))
            assert pairwise_distance_quantile(coords, q) == pytest.approx(d[rank - 1])

    def test_monotone_in_q(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            coords = rng.random((12, 2))
            qs = np.sort(rng.random(5))
            vals = [pairwise_distance_quantile(coords, q) for q in qs]
            assert np.all(np.diff(vals) >= 0)

    def test_insufficient_points(self):
        with pytest.raises(InsufficientDataError):
            pairwise_distance_quantile(np.array([[0.0, 0.0]]), 0.5)

    def test_subsampled_mode_close_to_exact(self):
        rng = np.random.default_rng(3)
        coords = rng.random((300, 2))
        exact = pairwise_distance_quantile(coords, 0.5)
        approx = pairwise_distance_quantile(coords, 0.5, max_pairs=5000, seed=0)
        assert abs(approx - exact) < 0.05

    def test_summary_table_monotone(self):
        rng = np.random.default_rng(4)
        summary = summarize_distances(rng.random((30, 2)))
        probs = sorted(summary.quantile_table)
        vals = [summary.quantile_table[p] for p in probs]
        assert np.all(np.diff(vals) >= 0)
        assert summary.n_pairs == 30 * 29 // 2
        assert summary.min_pair_distance == summary.quantile_table[0.0]


class TestCsvRoundTrip:
    def test_fully_labeled(self, tmp_path):
        path = tmp_path / "full.csv"
        path.write_text(
            "sx,sy,f1,yhat,r,y\n"
            "0.0,0.0,1.0,2.0,1,2.5\n"
            "1.0,0.0,2.0,3.0,1,3.5\n"
            "0.0,1.0,3.0,4.0,1,4.5\n"
        )
        cmap = {"coords": ["sx", "sy"], "features": ["f1"], "pred": "yhat", "label": "r", "outcome": "y"}
        ds = load_dataset_csv(path, cmap)
        assert ds.n == 3
        assert ds.labeled.all()

    def test_unlabeled_rows_accept_empty_and_na(self, tmp_path):
        path = tmp_path / "mar.csv"
        path.write_text(
            "sx,sy,yhat,r,y\n0,0,1.0,0,\n1,0,1.5,0,NA\n0,1,2.0,1,2.25\n"
        )
        cmap = {"coords": ["sx", "sy"], "features": [], "pred": "yhat", "label": "r", "outcome": "y"}
        ds = load_dataset_csv(path, cmap)
        assert list(ds.labeled) == [False, False, True]
        assert np.isnan(ds.outcome[0]) and np.isnan(ds.outcome[1])
        assert ds.outcome[2] == 2.25

    def test_labeled_row_with_empty_outcome_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sx,sy,yhat,r,y\n0,0,1.0,1,2.0\n1,0,1.5,1,\n")
        cmap = {"coords": ["sx", "sy"], "features": [], "pred": "yhat", "label": "r", "outcome": "y"}
        with pytest.raises(ConsistencyError, match="row 2"):
            load_dataset_csv(path, cmap)

    def test_missing_column_is_schema_error(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("sx,sy,yhat,r\n0,0,1.0,1\n")
        cmap = {"coords": ["sx", "sy"], "features": [], "pred": "yhat", "label": "r", "outcome": "y"}
        with pytest.raises(SchemaError, match="y"):
            load_dataset_csv(path, cmap)

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = tmp_path / "parse.csv"
        path.write_text("sx,sy,yhat,r,y\n0,0,1.0,1,2.0\noops,0,1.0,1,2.0\n")
        cmap = {"coords": ["sx", "sy"], "features": [], "pred": "yhat", "label": "r", "outcome": "y"}
        with pytest.raises(ParseError, match="row 2"):
            load_dataset_csv(path, cmap)

    def test_round_trip_bit_for_bit(self, tmp_path):
        ds = make_dataset(n=37, p=3, seed=9)
        path = tmp_path / "round.csv"
        cmap = save_dataset_csv(ds, path)
        back = load_dataset_csv(path, cmap)
        assert np.array_equal(back.coords, ds.coords)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.pred, ds.pred)
        assert np.array_equal(back.labeled, ds.labeled)
        assert np.array_equal(back.outcome[ds.labeled], ds.outcome[ds.labeled])
        assert np.isnan(back.outcome[~ds.labeled]).all()
