import numpy as np
import pytest

from spatialdr import (
    RidgeRegression,
    SpatialDataset,
    build_fold_plan,
    crossfit_nuisances,
)
from spatialdr.exceptions import NuisanceStarvationError, ParameterError

from test_dataset import make_dataset


def crossfit_default(ds, k=4, seed=0, **kwargs):
    plan = build_fold_plan(ds, k, q_b=0.05, min_train=1, seed=seed)
    return crossfit_nuisances(ds, plan, seed=seed, **kwargs)


class TestOracleOverrides:
    def test_constant_override_is_mcar_branch(self):
        ds = make_dataset(n=40, seed=0)
        cf = crossfit_default(ds, pi_override=np.full(40, 0.20))
        assert cf.pi_source == "oracle_mcar_constant"
        np.testing.assert_array_equal(cf.pi_hat, 0.20)

    def test_override_clipped_to_pi_min(self):
        ds = make_dataset(n=40, seed=1)
        override = np.full(40, 0.5)
        override[0] = 0.02
        override[1] = 0.99
        cf = crossfit_default(ds, pi_override=override, pi_min=0.10)
        assert cf.pi_source == "oracle_mar"
        assert cf.pi_hat[0] == 0.10
        assert cf.pi_hat[1] == 0.90
        assert cf.pi_raw[0] == 0.02  # raw kept for clip-rate diagnostics

    def test_m_override_used_verbatim(self):
        ds = make_dataset(n=40, seed=2)
        cf = crossfit_default(ds, m_override=ds.pred, pi_override=np.full(40, 0.2))
        np.testing.assert_array_equal(cf.m_hat, ds.pred)
        assert cf.m_source == "external_pred"

    def test_bad_pi_min(self):
        ds = make_dataset(n=30, seed=3)
        with pytest.raises(ParameterError):
            crossfit_default(ds, pi_min=0.6)


class TestEstimatedNuisances:
    def test_perfect_prediction_fixed_point(self):
        # y == pred exactly, all labeled: out-of-fold ridge recovers pred
        rng = np.random.default_rng(4)
        n = 120
        coords = rng.random((n, 2))
        x = rng.standard_normal((n, 2))
        y = 1.5 + x @ np.array([1.0, -0.5])
        ds = SpatialDataset(
            coords=coords,
            features=x,
            pred=y,
            labeled=np.ones(n, dtype=bool),
            outcome=y,
        )
        cf = crossfit_default(ds, m_learner=RidgeRegression(lam=1e-10))
        np.testing.assert_allclose(cf.m_hat, y, atol=1e-8)

    def test_clipping_always_holds(self):
        for seed in range(5):
            ds = make_dataset(n=60, label_rate=0.3, seed=seed)
            cf = crossfit_default(ds, pi_min=0.10, seed=seed)
            assert cf.pi_hat.min() >= 0.10
            assert cf.pi_hat.max() <= 0.90

    def test_out_of_fold_purity(self):
        # mutating row i's outcome must not move that row's nuisances
        ds = make_dataset(n=80, label_rate=0.6, seed=5)
        plan = build_fold_plan(ds, 4, q_b=0.05, min_train=1, seed=5)
        cf = crossfit_nuisances(ds, plan, seed=5)
        i = int(np.flatnonzero(ds.labeled)[0])
        outcome = ds.outcome.copy()
        outcome[i] += 250.0
        ds_mut = SpatialDataset(
            coords=ds.coords,
            features=ds.features,
            pred=ds.pred,
            labeled=ds.labeled,
            outcome=outcome,
        )
        cf_mut = crossfit_nuisances(ds_mut, plan, seed=5)
        assert cf.m_hat[i] == cf_mut.m_hat[i]
        assert cf.pi_hat[i] == cf_mut.pi_hat[i]

    def test_fold_dependence_fingerprint(self):
        # perturbing one training row only moves folds trained on it
        ds = make_dataset(n=80, label_rate=0.6, seed=6)
        plan = build_fold_plan(ds, 4, q_b=0.05, min_train=1, seed=6)
        cf = crossfit_nuisances(ds, plan, seed=6)
        i = int(np.flatnonzero(ds.labeled)[0])
        outcome = ds.outcome.copy()
        outcome[i] += 100.0
        ds_mut = SpatialDataset(
            coords=ds.coords,
            features=ds.features,
            pred=ds.pred,
            labeled=ds.labeled,
            outcome=outcome,
        )
        cf_mut = crossfit_nuisances(ds_mut, plan, seed=6)
        for k in range(1, plan.n_folds + 1):
            held = plan.held_out(k)
            changed = not np.array_equal(cf.m_hat[held], cf_mut.m_hat[held])
            trained_on_i = i in set(plan.train_sets[k - 1])
            assert changed == trained_on_i

    def test_starved_fold_raises(self):
        # a fold whose training set holds every labeled unit starves the rest
        n = 40
        rng = np.random.default_rng(7)
        labeled = np.zeros(n, dtype=bool)
        labeled[:3] = True  # all labels in one spatial corner
        coords = rng.random((n, 2))
        ds = SpatialDataset(
            coords=coords,
            features=rng.standard_normal((n, 1)),
            pred=rng.standard_normal(n),
            labeled=labeled,
            outcome=np.where(labeled, 1.0, np.nan),
        )
        # force folds so that fold 1 holds all labeled units
        from spatialdr.folds import FoldPlan

        assignment = np.r_[np.ones(3, int), 1 + (np.arange(n - 3) % 4)]
        train_sets = tuple(
            np.flatnonzero(assignment != k) for k in range(1, 5)
        )
        plan = FoldPlan(
            assignment=assignment,
            train_sets=train_sets,
            buffer_radius=0.0,
            fallback_used=(False,) * 4,
        )
        with pytest.raises(NuisanceStarvationError, match="fold"):
            crossfit_nuisances(ds, plan)

    def test_deterministic(self):
        ds = make_dataset(n=60, seed=8)
        cf1 = crossfit_default(ds, seed=9)
        cf2 = crossfit_default(ds, seed=9)
        np.testing.assert_array_equal(cf1.m_hat, cf2.m_hat)
        np.testing.assert_array_equal(cf1.pi_hat, cf2.pi_hat)
