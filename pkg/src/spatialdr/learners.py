"""Pluggable nuisance learners with a scikit-learn flavored fit/predict API.

Three families are provided: ridge regression with an unpenalized
intercept (default outcome model), IRLS logistic regression with a small
permanent ridge (default propensity model), and stagewise gradient
boosting over axis-aligned regression trees (base prediction model,
optionally a nuisance learner).  Logistic predictions are probabilities,
so every learner exposes ``predict(X) -> float array`` and plugs into the
cross-fitting orchestrator uniformly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logit
from sklearn.base import BaseEstimator
from sklearn.tree import DecisionTreeRegressor

from .exceptions import ParameterError, RankError
from .validation import as_matrix, as_vector


class RidgeRegression(BaseEstimator):
    """Least squares with an L2 penalty on the slopes only.

    Minimizes ``||y - b0 - X b||^2 + lam * ||b||^2``; the intercept is
    never penalized, so ``lam = 0`` with a full-rank design reproduces
    ordinary least squares exactly.
    """

    def __init__(self, lam: float = 1e-3):
        self.lam = lam

    def fit(self, X, y, sample_weight=None):
        X = as_matrix(X, "design")
        y = as_vector(y, "targets", X.shape[0])
        if self.lam < 0:
            raise ParameterError("ridge penalty must be nonnegative")
        if sample_weight is not None:
            w = as_vector(sample_weight, "sample_weight", X.shape[0])
            sw = np.sqrt(w)
            x_mean = np.average(X, axis=0, weights=w)
            y_mean = np.average(y, weights=w)
            Xc = (X - x_mean) * sw[:, None]
            yc = (y - y_mean) * sw
        else:
            x_mean = X.mean(axis=0)
            y_mean = y.mean()
            Xc = X - x_mean
            yc = y - y_mean
        q = X.shape[1]
        gram = Xc.T @ Xc + self.lam * np.eye(q)
        if self.lam == 0.0 and q > 0:
            if np.linalg.matrix_rank(gram) < q:
                raise RankError(
                    "singular normal equations; use lam > 0 or drop collinear columns"
                )
        self.coef_ = np.linalg.solve(gram, Xc.T @ yc) if q > 0 else np.zeros(0)
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X):
        X = as_matrix(X, "design", n_cols=self.coef_.shape[0])
        return self.intercept_ + X @ self.coef_


class LogisticIRLS(BaseEstimator):
    """Logistic regression via iteratively reweighted least squares.

    A permanent ridge ``lam`` (on all coefficients, intercept included)
    keeps the Newton updates globally defined under perfect separation;
    ``separation_flag_`` reports when the fitted linear predictor has
    effectively pinned probabilities at 0 or 1.
    """

    #: |linear predictor| beyond which fitted probabilities are pinned
    #: within ~2e-6 of 0/1; the ridge equilibrium under true separation
    #: lands above this for any reasonable sample size.
    SEPARATION_ETA = 13.0

    def __init__(self, lam: float = 1e-6, max_iter: int = 100, tol: float = 1e-8):
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        X = as_matrix(X, "design")
        n, q = X.shape
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != n:
            raise ParameterError(f"labels must have length {n}")
        w = (
            np.ones(n)
            if sample_weight is None
            else as_vector(sample_weight, "sample_weight", n)
        )
        Z = np.column_stack([np.ones(n), X])
        beta = np.zeros(q + 1)
        ridge = self.lam * np.eye(q + 1)

        def objective(b):
            eta = Z @ b
            # log-likelihood written to stay finite at extreme eta
            ll = np.sum(w * (y * eta - np.logaddexp(0.0, eta)))
            return ll - 0.5 * self.lam * (b @ b)

        self.converged_ = False
        obj = objective(beta)
        for _ in range(self.max_iter):
            p = expit(Z @ beta)
            grad = Z.T @ (w * (y - p)) - self.lam * beta
            curv = p * (1.0 - p)
            hess = Z.T @ (Z * (w * curv)[:, None]) + ridge
            step = np.linalg.solve(hess, grad)
            # halve overshooting Newton steps; the penalized objective is concave
            scale = 1.0
            for _ in range(20):
                candidate = beta + scale * step
                cand_obj = objective(candidate)
                if cand_obj >= obj - 1e-12:
                    break
                scale *= 0.5
            beta = beta + scale * step
            obj = objective(beta)
            if np.max(np.abs(scale * step)) < self.tol:
                self.converged_ = True
                break

        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        eta = Z @ beta
        self.separation_flag_ = bool(np.max(np.abs(eta)) > self.SEPARATION_ETA)
        return self

    def predict(self, X):
        """Predicted probabilities (the propensity contract)."""
        X = as_matrix(X, "design", n_cols=self.coef_.shape[0])
        return expit(self.intercept_ + X @ self.coef_)


class GradientBoosting(BaseEstimator):
    """Stagewise additive boosting of shallow regression trees.

    Squared loss starts from the target mean and fits each tree to the
    current residuals; logistic loss starts from the log-odds of the
    base rate and fits trees to ``y - p`` on the logit scale, with
    ``predict`` returning probabilities.  Boosting stops early once the
    gradients vanish (constant targets yield the initial value alone).
    """

    def __init__(
        self,
        loss: str = "squared",
        trees: int = 100,
        depth: int = 3,
        rate: float = 0.1,
        min_samples_leaf: int = 5,
        seed=None,
    ):
        self.loss = loss
        self.trees = trees
        self.depth = depth
        self.rate = rate
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def _check_params(self):
        if self.loss not in ("squared", "logistic"):
            raise ParameterError(f"unknown loss {self.loss!r}")
        if self.trees < 1 or self.depth < 1:
            raise ParameterError("trees and depth must be at least 1")
        if not 0.0 < self.rate <= 1.0:
            raise ParameterError("rate must lie in (0, 1]")

    def fit(self, X, y, sample_weight=None):
        self._check_params()
        X = as_matrix(X, "design")
        y = as_vector(y, "targets", X.shape[0])
        rng = np.random.default_rng(self.seed)

        if self.loss == "squared":
            self.init_ = float(y.mean())
        else:
            rate0 = float(np.clip(y.mean(), 1e-6, 1.0 - 1e-6))
            self.init_ = float(logit(rate0))

        f = np.full(X.shape[0], self.init_)
        self.trees_ = []
        for _ in range(self.trees):
            grad = y - (f if self.loss == "squared" else expit(f))
            if np.max(np.abs(grad)) < 1e-12:
                break
            tree = DecisionTreeRegressor(
                max_depth=self.depth,
                min_samples_leaf=self.min_samples_leaf,
                random_state=int(rng.integers(2**31 - 1)),
            )
            tree.fit(X, grad, sample_weight=sample_weight)
            f = f + self.rate * tree.predict(X)
            self.trees_.append(tree)
        return self

    def decision_function(self, X):
        X = as_matrix(X, "design")
        f = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            f = f + self.rate * tree.predict(X)
        return f

    def predict(self, X):
        f = self.decision_function(X)
        return expit(f) if self.loss == "logistic" else f


def make_learner(kind: str, *, task: str, seed=None, **overrides):
    """Instantiate a learner by registry name.

    ``task`` is ``"outcome"`` (regression) or ``"propensity"``
    (probability output); it picks the loss for the boosted family.
    """
    if kind == "ridge":
        return RidgeRegression(**overrides)
    if kind == "logistic":
        return LogisticIRLS(**overrides)
    if kind == "gbt":
        loss = "squared" if task == "outcome" else "logistic"
        return GradientBoosting(loss=loss, seed=seed, **overrides)
    raise ParameterError(f"unknown learner {kind!r}")
