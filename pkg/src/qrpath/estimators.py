"""scikit-learn compatible estimators for ridge-penalised quantile regression."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import Dataset, FitConfig, kkt_residual
from .cv import exact_loo_cv, loo_at
from .exceptions import ValidationError
from .lambda_path import build_lambda_path, full_fit_at, lambda_grid
from .omega_path import build_omega_path

AUTO_LAMBDA_FLOOR = 1e-4


def _validate_tau(tau):
    FitConfig(tau, 1.0)


def auto_lambda_grid(data: Dataset, tau: float, n_lambda: int):
    """Descending log grid over the full-data breakpoint range, floored at 1e-4."""
    path = build_lambda_path(data, tau, AUTO_LAMBDA_FLOOR)
    return lambda_grid(path, n_lambda, AUTO_LAMBDA_FLOOR)[::-1], path


class QuantileRidge(RegressorMixin, BaseEstimator):
    """Check loss plus ``lam/2 ||beta||^2`` with an unpenalised intercept.

    The fit is exact: it is read off the piecewise-linear penalty path and
    certified by the KKT residual stored in ``kkt_residual_``.
    """

    def __init__(self, tau: float = 0.5, lam: float = 1.0):
        self.tau = tau
        self.lam = lam

    def _data(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return Dataset(X, y)

    def fit(self, X, y):
        cfg = FitConfig(self.tau, self.lam)
        data = self._data(X, y)
        sol = full_fit_at(data, cfg.tau, cfg.lam)
        self.solution_ = sol
        self.coef_ = np.array(sol.beta)
        self.intercept_ = sol.beta0
        self.dual_coef_ = np.array(sol.theta)
        self.elbow_ = np.array(sol.partition.elbow, dtype=int)
        self.kkt_residual_ = kkt_residual(sol, data, cfg)
        self.n_features_in_ = data.p
        self._train = data
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}")
        return self.intercept_ + X @ self.coef_

    def loo_predict(self):
        """Exact leave-one-out predictions on the training data."""
        check_is_fitted(self, "coef_")
        return loo_at(self._train, float(self.tau), float(self.lam), self.solution_).predictions

    def weight_path(self, case: int):
        """Solution path as the training case ``case`` is down-weighted to 0."""
        check_is_fitted(self, "coef_")
        cfg = FitConfig(self.tau, self.lam)
        return build_omega_path(self._train, cfg, case, self.solution_)


class QuantileRidgeLOOCV(RegressorMixin, BaseEstimator):
    """Selects ``lam`` by exact leave-one-out check loss, then refits.

    ``lambdas`` (any order) overrides the automatic ``n_lambda``-point grid.
    """

    def __init__(self, tau: float = 0.5, lambdas=None, n_lambda: int = 50,
                 threads: Optional[int] = None):
        self.tau = tau
        self.lambdas = lambdas
        self.n_lambda = n_lambda
        self.threads = threads

    def fit(self, X, y):
        _validate_tau(self.tau)
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        data = Dataset(X, y)
        tau = float(self.tau)
        if self.lambdas is None:
            grid, path = auto_lambda_grid(data, tau, int(self.n_lambda))
        else:
            grid = np.unique(np.asarray(self.lambdas, dtype=float))[::-1]
            if grid.size == 0 or grid[-1] <= 0:
                raise ValidationError("lambdas must be positive")
            path = build_lambda_path(data, tau, float(grid[-1]))
        self.cv_ = exact_loo_cv(data, tau, grid, threads=self.threads, path=path)
        self.lam_ = self.cv_.argmin_rcv
        sol = path.solution_at(self.lam_)
        self.solution_ = sol
        self.coef_ = np.array(sol.beta)
        self.intercept_ = sol.beta0
        self.n_features_in_ = data.p
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}")
        return self.intercept_ + X @ self.coef_
