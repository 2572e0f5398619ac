"""Scikit-learn compatible estimator interfaces.

Rows carry a population label (``populations=...`` in ``fit``/``predict``);
each population gets its own coefficient column, error scale and intercept.
Omitting the labels treats all rows as one population, which reduces the
joint estimator to a single sparse regression with estimated error variance.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .approx import fit_aen, fit_heat_approx, fit_sen_all
from .dataset import StandardizeOptions, build_dataset
from .elastic_net import DEFAULT_ALPHAS
from .penalty import DEFAULT_GAMMA_RATIOS, PenaltyParams
from .solver import SolverConfig, fit_heat
from .tuning import CVPlan, fit_cv


def _split_by_population(X, y, populations):
    X = check_array(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y have inconsistent numbers of rows")
    if populations is None:
        populations = np.zeros(X.shape[0], dtype=np.int64)
    populations = np.asarray(populations)
    if populations.shape[0] != X.shape[0]:
        raise ValueError("populations must have one entry per row")
    labels = list(dict.fromkeys(populations.tolist()))
    ys = [y[populations == lab] for lab in labels]
    Xs = [X[populations == lab] for lab in labels]
    return ys, Xs, [str(lab) for lab in labels], populations


class _PopulationRegressor(BaseEstimator, RegressorMixin):
    """Shared fit/predict plumbing over the population-labelled data model."""

    def _fit_dataset(self, data, seed):
        raise NotImplementedError

    def fit(self, X, y, populations=None):
        ys, Xs, labels, _ = _split_by_population(X, y, populations)
        names = getattr(X, "columns", None)
        data = build_dataset(
            ys, Xs, labels,
            feature_names=None if names is None else [str(c) for c in names],
            options=StandardizeOptions(mode=self.standardize),
        )
        result = self._fit_dataset(data, int(self.random_state or 0))
        self.result_ = result
        self.coef_ = result.B_hat
        self.intercept_ = result.intercepts
        self.sigma_ = result.sigma_hat
        self.population_labels_ = list(result.population_labels)
        self.n_features_in_ = data.n_features
        self.feature_names_ = list(data.feature_names)
        return self

    def predict(self, X, populations=None):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("X has a different number of features than at fit")
        if populations is None:
            if len(self.population_labels_) != 1:
                raise ValueError("populations is required for multi-population "
                                 "models")
            populations = np.zeros(X.shape[0], dtype=np.int64)
        populations = np.asarray(populations)
        out = np.empty(X.shape[0])
        for lab in np.unique(populations):
            try:
                j = self.population_labels_.index(str(lab))
            except ValueError:
                raise ValueError(f"model has no population {lab!r}") from None
            m = populations == lab
            out[m] = self.intercept_[j] + X[m] @ self.coef_[:, j]
        return out

    def score(self, X, y, populations=None):
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        pred = self.predict(X, populations=populations)
        sst = float(((y - y.mean()) ** 2).sum())
        sse = float(((y - pred) ** 2).sum())
        return 1.0 - sse / sst if sst > 0 else float("nan")


class HeatRegressor(_PopulationRegressor):
    """Joint sparse fit with per-population error scales.

    With ``lam=None`` the penalty pair is chosen by within-population
    cross-validation over a geometric grid.  ``rho_mode`` selects the exact
    estimator ("free"), the equal-variance restriction ("unit"), or pinned
    scales ("fixed", via ``sigma_fixed``).

    Parameters
    ----------
    lam, gamma : float or None
        Group and elementwise penalty weights; ``lam=None`` triggers CV.
    rho_mode : {"free", "unit", "fixed"}
    sigma_fixed : array-like or None
        Per-population error SDs when ``rho_mode='fixed'``.
    cv_folds, grid_size, grid_eps, gamma_ratios
        Cross-validation plan used when ``lam`` is None.
    """

    def __init__(self, lam=None, gamma=0.0, *, rho_mode="free",
                 sigma_fixed=None, cv_folds=10, grid_size=50, grid_eps=0.01,
                 gamma_ratios=DEFAULT_GAMMA_RATIOS,
                 standardize="unit_norm_bounded", tol=1e-7, kkt_tol=1e-4,
                 max_outer=500, max_inner=200, accelerate=True,
                 random_state=0):
        self.lam = lam
        self.gamma = gamma
        self.rho_mode = rho_mode
        self.sigma_fixed = sigma_fixed
        self.cv_folds = cv_folds
        self.grid_size = grid_size
        self.grid_eps = grid_eps
        self.gamma_ratios = gamma_ratios
        self.standardize = standardize
        self.tol = tol
        self.kkt_tol = kkt_tol
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.accelerate = accelerate
        self.random_state = random_state

    def _config(self):
        rho_fixed = None
        if self.rho_mode == "fixed":
            if self.sigma_fixed is None:
                raise ValueError("rho_mode='fixed' requires sigma_fixed")
            rho_fixed = 1.0 / np.asarray(self.sigma_fixed, float).reshape(-1)
        return SolverConfig(max_outer=self.max_outer,
                            max_inner=self.max_inner, tol=self.tol,
                            kkt_tol=self.kkt_tol, accelerate=self.accelerate,
                            rho_mode=self.rho_mode, rho_fixed=rho_fixed)

    def _fit_dataset(self, data, seed):
        config = self._config()
        if self.lam is None:
            name = {"free": "heat", "unit": "reheat",
                    "fixed": "heat-oracle"}[self.rho_mode]
            plan = CVPlan(folds=self.cv_folds, grid_size=self.grid_size,
                          grid_eps=self.grid_eps,
                          gamma_ratios=tuple(self.gamma_ratios), seed=seed)
            return fit_cv(data, name, plan, config,
                          sigma_true=self.sigma_fixed)
        params = PenaltyParams.for_dataset(data, self.lam, self.gamma)
        return fit_heat(data, params, config)


class HeatApproxRegressor(_PopulationRegressor):
    """Two-step variant: pilot error scales, then one fixed-scale solve."""

    def __init__(self, lam=None, gamma=0.0, *, pilot_formula="natural",
                 pilot_folds=10, cv_folds=10, grid_size=50, grid_eps=0.01,
                 gamma_ratios=DEFAULT_GAMMA_RATIOS,
                 standardize="unit_norm_bounded", tol=1e-7, kkt_tol=1e-4,
                 max_outer=500, max_inner=200, random_state=0):
        self.lam = lam
        self.gamma = gamma
        self.pilot_formula = pilot_formula
        self.pilot_folds = pilot_folds
        self.cv_folds = cv_folds
        self.grid_size = grid_size
        self.grid_eps = grid_eps
        self.gamma_ratios = gamma_ratios
        self.standardize = standardize
        self.tol = tol
        self.kkt_tol = kkt_tol
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.random_state = random_state

    def _fit_dataset(self, data, seed):
        config = SolverConfig(max_outer=self.max_outer,
                              max_inner=self.max_inner, tol=self.tol,
                              kkt_tol=self.kkt_tol)
        if self.lam is None:
            plan = CVPlan(folds=self.cv_folds, grid_size=self.grid_size,
                          grid_eps=self.grid_eps,
                          gamma_ratios=tuple(self.gamma_ratios), seed=seed)
            return fit_cv(data, "heat-app", plan, config,
                          pilot_formula=self.pilot_formula,
                          pilot_folds=self.pilot_folds)
        params = PenaltyParams.for_dataset(data, self.lam, self.gamma)
        return fit_heat_approx(data, params, config,
                               pilot_folds=self.pilot_folds,
                               pilot_formula=self.pilot_formula, seed=seed)


class SenRegressor(_PopulationRegressor):
    """Independent elastic net per population, (lam, alpha) by CV."""

    def __init__(self, *, alphas=DEFAULT_ALPHAS, cv_folds=10, n_lambda=50,
                 standardize="unit_norm_bounded", random_state=0):
        self.alphas = alphas
        self.cv_folds = cv_folds
        self.n_lambda = n_lambda
        self.standardize = standardize
        self.random_state = random_state

    def _fit_dataset(self, data, seed):
        return fit_sen_all(data, cv_folds=self.cv_folds,
                           alphas=tuple(self.alphas),
                           n_lambda=self.n_lambda, seed=seed)


class AenRegressor(_PopulationRegressor):
    """Single elastic net on stacked rows with per-population intercepts."""

    def __init__(self, *, alphas=DEFAULT_ALPHAS, cv_folds=10, n_lambda=50,
                 standardize="unit_norm_bounded", random_state=0):
        self.alphas = alphas
        self.cv_folds = cv_folds
        self.n_lambda = n_lambda
        self.standardize = standardize
        self.random_state = random_state

    def _fit_dataset(self, data, seed):
        return fit_aen(data, cv_folds=self.cv_folds,
                       alphas=tuple(self.alphas), n_lambda=self.n_lambda,
                       seed=seed)
