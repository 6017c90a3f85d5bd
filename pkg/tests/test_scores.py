import numpy as np
import pytest

from spatialdr import (
    ScoreVector,
    SpatialDataset,
    crossppi_estimate,
    dr_scores,
    ordered_mean,
)
from spatialdr.crossfit import CrossfitResult
from spatialdr.exceptions import InsufficientLabelsError
from spatialdr.folds import FoldPlan


def manual_crossfit(ds, m_hat, pi_hat, k=2):
    """CrossfitResult with hand-chosen nuisances and round-robin folds."""
    n = ds.n
    assignment = 1 + (np.arange(n) % k)
    plan = FoldPlan(
        assignment=assignment,
        train_sets=tuple(np.flatnonzero(assignment != f) for f in range(1, k + 1)),
        buffer_radius=0.0,
        fallback_used=(True,) * k,
    )
    pi_hat = np.asarray(pi_hat, dtype=float)
    return CrossfitResult(
        m_hat=np.asarray(m_hat, dtype=float),
        pi_hat=pi_hat,
        pi_raw=pi_hat,
        fold_plan=plan,
        pi_source="oracle_mar",
        m_source="external_pred",
        pi_min=0.01,
        separation_flags=(),
    )


def simple_dataset(y, labeled, pred=None, seed=0):
    y = np.asarray(y, dtype=float)
    labeled = np.asarray(labeled, dtype=bool)
    n = y.size
    rng = np.random.default_rng(seed)
    return SpatialDataset(
        coords=rng.random((n, 2)),
        features=rng.standard_normal((n, 1)),
        pred=y if pred is None else np.asarray(pred, dtype=float),
        labeled=labeled,
        outcome=np.where(labeled, y, np.nan),
    )


class TestDrScores:
    def test_fully_observed_with_unit_propensity_is_sample_mean(self):
        y = np.array([3.0, -1.0, 4.0, 1.5])
        ds = simple_dataset(y, [True] * 4)
        cf = manual_crossfit(ds, m_hat=np.zeros(4), pi_hat=np.ones(4))
        sv = dr_scores(ds, cf)
        np.testing.assert_array_equal(sv.scores, y)
        assert sv.theta_hat == pytest.approx(y.mean())

    def test_unlabeled_units_keep_outcome_model_value(self):
        ds = simple_dataset([1.0, 2.0], [True, False])
        cf = manual_crossfit(ds, m_hat=[0.5, 7.0], pi_hat=[0.5, 0.5])
        sv = dr_scores(ds, cf)
        assert sv.scores[1] == 7.0

    def test_hand_worked_two_unit_example(self):
        # labeled: m=1, pi=0.5, y=3 -> 1 + (3-1)/0.5 = 5 ; unlabeled: m=2
        ds = simple_dataset([3.0, 0.0], [True, False])
        cf = manual_crossfit(ds, m_hat=[1.0, 2.0], pi_hat=[0.5, 0.9])
        sv = dr_scores(ds, cf)
        np.testing.assert_array_equal(sv.scores, [5.0, 2.0])
        assert sv.theta_hat == pytest.approx(3.5)

    def test_location_equivariance(self):
        rng = np.random.default_rng(1)
        n = 50
        y = rng.standard_normal(n)
        labeled = rng.random(n) < 0.5
        labeled[0] = True
        m = rng.standard_normal(n)
        pi = rng.uniform(0.2, 0.8, n)
        ds = simple_dataset(y, labeled)
        sv = dr_scores(ds, manual_crossfit(ds, m, pi))
        c = 11.25
        ds_shift = simple_dataset(y + c, labeled)
        sv_shift = dr_scores(ds_shift, manual_crossfit(ds_shift, m + c, pi))
        np.testing.assert_allclose(sv_shift.scores, sv.scores + c, rtol=1e-12)
        assert sv_shift.theta_hat == pytest.approx(sv.theta_hat + c, rel=1e-12)

    def test_theta_is_left_to_right_mean(self):
        rng = np.random.default_rng(2)
        scores = rng.standard_normal(333)
        sv = ScoreVector.build(scores, 1 + (np.arange(333) % 3))
        acc = 0.0
        for v in scores:
            acc += float(v)
        assert sv.theta_hat == acc / 333


class TestCrossPpi:
    def test_zero_residual_case(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        ds = simple_dataset(y, [True, True, True, True], pred=y)
        point, var = crossppi_estimate(ds)
        assert point == pytest.approx(y.mean())

    def test_plug_in_variance_formula(self):
        rng = np.random.default_rng(3)
        n = 200
        y = rng.standard_normal(n)
        pred = y + rng.standard_normal(n)
        labeled = rng.random(n) < 0.4
        ds = simple_dataset(y, labeled, pred=pred)
        point, var = crossppi_estimate(ds)
        resid = y[labeled] - pred[labeled]
        expected = np.var(pred, ddof=1) / n + np.var(resid, ddof=1) / labeled.sum()
        assert var == pytest.approx(expected, rel=1e-12)
        assert point == pytest.approx(pred.mean() + resid.mean(), rel=1e-12)

    def test_too_few_labels(self):
        ds = simple_dataset([1.0, 2.0, 3.0], [True, False, False])
        with pytest.raises(InsufficientLabelsError):
            crossppi_estimate(ds)


class TestOrderedMean:
    def test_matches_numpy_on_typical_inputs(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(1000)
        assert ordered_mean(x) == pytest.approx(float(np.mean(x)), rel=1e-12)
