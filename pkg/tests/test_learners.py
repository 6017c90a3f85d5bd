import numpy as np
import pytest
from scipy.special import expit
from sklearn.tree import DecisionTreeRegressor

from spatialdr import GradientBoosting, LogisticIRLS, RidgeRegression, make_learner
from spatialdr.exceptions import ParameterError, RankError


class TestRidge:
    def test_exact_linear_fit(self):
        x = np.linspace(-2, 2, 25)[:, None]
        y = 2.0 * x[:, 0]
        model = RidgeRegression(lam=0.0).fit(x, y)
        assert model.coef_[0] == pytest.approx(2.0, abs=1e-10)
        assert model.intercept_ == pytest.approx(0.0, abs=1e-10)

    def test_shrinkage_limit(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((40, 2))
        y = 3.0 + x @ np.array([1.0, -2.0])
        model = RidgeRegression(lam=1e12).fit(x, y)
        assert np.all(np.abs(model.coef_) < 1e-6)
        assert model.intercept_ == pytest.approx(y.mean(), rel=1e-6)

    def test_matches_direct_kkt_solve(self):
        # independent oracle: augmented normal equations with the
        # intercept left unpenalized
        rng = np.random.default_rng(1)
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        lam = 0.1
        Z = np.column_stack([np.ones(20), X])
        penalty = lam * np.diag([0.0, 1.0, 1.0, 1.0])
        beta = np.linalg.solve(Z.T @ Z + penalty, Z.T @ y)
        model = RidgeRegression(lam=lam).fit(X, y)
        assert model.intercept_ == pytest.approx(beta[0], rel=1e-10)
        np.testing.assert_allclose(model.coef_, beta[1:], rtol=1e-10)

    def test_singular_at_lam_zero(self):
        X = np.ones((10, 2))  # duplicated constant columns
        X[:, 1] = 1.0
        y = np.arange(10.0)
        with pytest.raises(RankError):
            RidgeRegression(lam=0.0).fit(X, y)

    def test_weighted_fit(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 2))
        y = 1.0 + X @ np.array([0.5, 0.5]) + 0.01 * rng.standard_normal(30)
        w = np.ones(30)
        w[:5] = 0.0  # corrupt then zero-weight the first rows
        y_bad = y.copy()
        y_bad[:5] = 100.0
        model = RidgeRegression(lam=1e-8).fit(X, y_bad, sample_weight=w)
        pred = model.predict(X[5:])
        np.testing.assert_allclose(pred, y[5:], atol=0.05)


class TestLogisticIRLS:
    def test_all_true_labels_flagged(self):
        X = np.zeros((50, 1))
        model = LogisticIRLS().fit(X, np.ones(50))
        p = model.predict(X)
        assert np.all(p > 0.999)
        assert model.separation_flag_ is True

    def test_no_signal_balanced(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((4000, 2))
        y = rng.random(4000) < 0.5
        model = LogisticIRLS().fit(X, y.astype(float))
        assert abs(model.intercept_) < 0.1
        assert np.all(np.abs(model.coef_) < 0.1)
        assert model.separation_flag_ is False

    def test_recovers_known_coefficient_vs_grid_oracle(self):
        rng = np.random.default_rng(4)
        n = 5000
        x = rng.standard_normal(n)
        y = (rng.random(n) < expit(1.5 * x)).astype(float)

        # brute-force grid over the slope (intercept-free model matches
        # the generator) maximizing the log-likelihood
        grid = np.arange(0.5, 2.5, 0.002)
        ll = [
            np.sum(y * (b * x) - np.logaddexp(0.0, b * x)) for b in grid
        ]
        beta_grid = grid[int(np.argmax(ll))]

        model = LogisticIRLS().fit(x[:, None], y)
        assert abs(model.coef_[0] - 1.5) < 0.1
        assert abs(beta_grid - 1.5) < 0.1
        assert abs(model.coef_[0] - beta_grid) < 0.05

    def test_converges(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((200, 3))
        y = (rng.random(200) < expit(X @ np.array([1.0, -1.0, 0.5]))).astype(float)
        model = LogisticIRLS().fit(X, y)
        assert model.converged_


class TestGradientBoosting:
    def test_constant_target_reduces_to_init(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((50, 2))
        y = np.full(50, 3.25)
        model = GradientBoosting(loss="squared", trees=20, seed=0).fit(X, y)
        assert len(model.trees_) == 0
        np.testing.assert_allclose(model.predict(X), 3.25)

    def test_step_function_low_training_mse(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, size=(400, 1))
        y = np.where(x[:, 0] > 0.2, 1.0, -1.0)  # the oracle is the step itself
        model = GradientBoosting(loss="squared", trees=50, depth=1, rate=0.5, seed=0)
        model.fit(x, y)
        mse = float(np.mean((model.predict(x) - y) ** 2))
        assert mse < 0.01 * np.var(y)

    def test_single_full_rate_tree_matches_plain_tree(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((200, 2))
        y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
        model = GradientBoosting(
            loss="squared", trees=1, depth=8, rate=1.0, min_samples_leaf=5, seed=0
        ).fit(X, y)
        # mean + tree on residuals with the same structure equals one tree on y
        direct = DecisionTreeRegressor(max_depth=8, min_samples_leaf=5, random_state=0)
        direct.fit(X, y - y.mean())
        np.testing.assert_allclose(model.predict(X), y.mean() + direct.predict(X), atol=1e-10)

    def test_logistic_loss_probabilities(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2000, 1))
        y = (rng.random(2000) < expit(2.0 * x[:, 0])).astype(float)
        model = GradientBoosting(loss="logistic", trees=80, depth=2, rate=0.2, seed=1)
        model.fit(x, y)
        p = model.predict(x)
        assert np.all((p > 0) & (p < 1))
        # monotone signal recovered: high-x units get higher probabilities
        assert p[x[:, 0] > 1].mean() > 0.7
        assert p[x[:, 0] < -1].mean() < 0.3

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            GradientBoosting(loss="huber").fit(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(ParameterError):
            GradientBoosting(rate=0.0).fit(np.zeros((3, 1)), np.zeros(3))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((300, 3))
        y = X @ np.array([1.0, 0.5, -0.5]) + rng.standard_normal(300)
        p1 = GradientBoosting(trees=30, seed=42).fit(X, y).predict(X)
        p2 = GradientBoosting(trees=30, seed=42).fit(X, y).predict(X)
        np.testing.assert_array_equal(p1, p2)


class TestRegistry:
    def test_make_learner(self):
        assert isinstance(make_learner("ridge", task="outcome"), RidgeRegression)
        assert isinstance(make_learner("logistic", task="propensity"), LogisticIRLS)
        gbt = make_learner("gbt", task="propensity", seed=0)
        assert gbt.loss == "logistic"
        with pytest.raises(ParameterError):
            make_learner("nets", task="outcome")
