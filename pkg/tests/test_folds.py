import numpy as np
import pytest

from spatialdr import SpatialDataset, assign_folds, build_fold_plan
from spatialdr.exceptions import ParameterError

from test_dataset import make_dataset


def cluster_dataset(gap=10.0, n_a=45, n_b=15, seed=0):
    """Two tight spatial clusters separated by a large gap.

    Unequal sizes keep the median pair distance at within-cluster scale
    (equal halves would put it between clusters: m^2 > m(m-1)).
    """
    rng = np.random.default_rng(seed)
    a = rng.random((n_a, 2)) * 0.5
    b = rng.random((n_b, 2)) * 0.5 + gap
    coords = np.vstack([a, b])
    n = n_a + n_b
    labeled = np.ones(n, dtype=bool)
    y = rng.standard_normal(n)
    return SpatialDataset(
        coords=coords,
        features=rng.standard_normal((n, 1)),
        pred=y + 0.1,
        labeled=labeled,
        outcome=y,
    )


class TestAssignFolds:
    def test_exact_division(self):
        a = assign_folds(10, 5, seed=0)
        sizes = np.bincount(a)[1:]
        assert list(sizes) == [2, 2, 2, 2, 2]

    def test_remainder_spread(self):
        a = assign_folds(11, 5, seed=0)
        sizes = sorted(np.bincount(a)[1:])
        assert sizes == [2, 2, 2, 2, 3]

    def test_deterministic(self):
        a = assign_folds(600, 5, seed=42)
        b = assign_folds(600, 5, seed=42)
        assert np.array_equal(a, b)
        c = assign_folds(600, 5, seed=43)
        assert not np.array_equal(a, c)

    def test_partition_property(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(5, 80))
            k = int(rng.integers(2, min(n, 9) + 1))
            a = assign_folds(n, k, seed=int(rng.integers(1e6)))
            assert a.shape == (n,)
            assert set(np.unique(a)) == set(range(1, k + 1))

    def test_bad_k(self):
        with pytest.raises(ParameterError):
            assign_folds(5, 1)
        with pytest.raises(ParameterError):
            assign_folds(5, 6)


class TestBuildFoldPlan:
    def test_zero_buffer_keeps_all_nontied(self):
        ds = make_dataset(n=60, seed=1)
        plan = build_fold_plan(ds, 3, q_b=0.0, min_train=1, seed=0)
        # r_n is the minimum pair distance; with continuous coords no other
        # pair sits exactly at it, so only that closest pair can be excluded
        for k in range(1, 4):
            held = plan.held_out(k)
            expected_complement = ds.n - held.size
            assert plan.train_sets[k - 1].size >= expected_complement - 2

    def test_two_clusters_train_on_opposite_cluster(self, monkeypatch):
        ds = cluster_dataset(gap=10.0, n_a=45, n_b=15)
        # folds aligned with clusters
        assignment = np.r_[np.ones(45, int), 2 * np.ones(15, int)]
        from spatialdr import folds as folds_mod

        monkeypatch.setattr(
            folds_mod, "assign_folds", lambda n, k, seed=None: assignment
        )
        plan = build_fold_plan(ds, 2, q_b=0.5, min_train=1, seed=0)
        r_n = plan.buffer_radius
        d = np.linalg.norm(ds.coords[:, None, :] - ds.coords[None, :, :], axis=2)
        for k in (1, 2):
            held = plan.held_out(k)
            train = plan.train_sets[k - 1]
            assert not plan.fallback_used[k - 1]
            # training set is exactly the opposite cluster
            assert set(train) == set(range(60)) - set(held)
            # direct distance check of the exclusion rule
            assert d[np.ix_(train, held)].min() > r_n

    def test_coincident_points_fall_back(self):
        n = 40
        ds = SpatialDataset(
            coords=np.zeros((n, 2)),
            features=np.zeros((n, 1)),
            pred=np.zeros(n),
            labeled=np.ones(n, dtype=bool),
            outcome=np.zeros(n),
        )
        plan = build_fold_plan(ds, 4, q_b=0.5, min_train=1, seed=0)
        assert plan.buffer_radius == 0.0
        assert all(plan.fallback_used)
        for k in range(1, 5):
            train = set(plan.train_sets[k - 1])
            assert train == set(range(n)) - set(plan.held_out(k))

    def test_buffer_correctness_brute_force(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            ds = make_dataset(n=50, seed=trial)
            plan = build_fold_plan(ds, 5, q_b=0.05, min_train=1, seed=trial)
            for k in range(1, 6):
                if plan.fallback_used[k - 1]:
                    continue
                held = plan.held_out(k)
                for i in plan.train_sets[k - 1]:
                    for j in held:
                        assert (
                            np.linalg.norm(ds.coords[i] - ds.coords[j])
                            > plan.buffer_radius
                        )

    def test_min_train_triggers_fallback(self):
        ds = make_dataset(n=50, seed=4)
        plan = build_fold_plan(ds, 5, q_b=0.9, min_train=40, seed=0)
        assert all(plan.fallback_used)

    def test_deterministic(self):
        ds = make_dataset(n=80, seed=5)
        p1 = build_fold_plan(ds, 4, q_b=0.05, min_train=10, seed=11)
        p2 = build_fold_plan(ds, 4, q_b=0.05, min_train=10, seed=11)
        assert np.array_equal(p1.assignment, p2.assignment)
        assert p1.buffer_radius == p2.buffer_radius
        for a, b in zip(p1.train_sets, p2.train_sets):
            assert np.array_equal(a, b)

    def test_bad_qb(self):
        ds = make_dataset(n=20)
        with pytest.raises(ParameterError):
            build_fold_plan(ds, 2, q_b=1.0)
