"""Two-step approximation and single-population baselines.

The two-step route first estimates each population's error variance with the
natural-lasso pilot (the minimized L1-penalized least-squares objective
doubles as a variance estimate), pins the precisions there, and solves the
now fully convex coefficient problem once.  The separate and pooled elastic
nets provide the per-population and population-agnostic baselines.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .dataset import MultiPopDataset
from .elastic_net import (DEFAULT_ALPHAS, EnetCVResult, cv_elastic_net,
                          fold_assignments)
from .objective import FitResult
from .penalty import PenaltyParams
from .solver import SolverConfig, fit_heat

PILOT_FORMULAS = ("natural", "as_printed")


@dataclass(frozen=True)
class PilotVariances:
    """Per-population pilot variance estimates and their tuning choices."""

    sigma_check: np.ndarray   # (J,) pilot standard deviations
    phi: np.ndarray           # (J,) selected L1 penalty levels
    betas: tuple              # pilot lasso coefficients, diagnostic only
    formula: str = "natural"

    def __post_init__(self):
        if np.any(np.asarray(self.sigma_check) <= 0):
            raise ValueError("pilot standard deviations must be positive")


def natural_lasso_sigma(y, X, *, phi_grid=None, folds: int = 10,
                        n_phi: int = 50, eps: float = 0.01,
                        formula: str = "natural", seed: int = 0):
    """Variance estimate from a cross-validated lasso on one population.

    Returns ``(sigma2, phi, beta)``.  The default formula evaluates
    ``(1/n)||y - X beta||^2 + 2 phi ||beta||_1`` at the selected fit, i.e.
    twice the minimized half-squared-loss objective, which is calibrated for
    the error variance; ``as_printed`` keeps the raw minimized objective
    (half that value under the lasso stationarity identity).
    """
    if formula not in PILOT_FORMULAS:
        raise ValueError(f"unknown pilot formula {formula!r}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    X = np.asarray(X, dtype=np.float64)
    n = y.shape[0]
    ids = fold_assignments(n, folds, seed)
    grids = None if phi_grid is None else {1.0: np.asarray(phi_grid, float)}
    cv = cv_elastic_net(y, X, ids, alphas=(1.0,), n_lambda=n_phi, eps=eps,
                        lam_grids=grids, standardize=False)
    if not np.all(np.isfinite(cv.beta)):
        raise ValueError("pilot lasso fits are degenerate for every phi")
    rss = float(cv.residuals @ cv.residuals) / n
    l1 = float(np.abs(cv.beta_scaled).sum())
    if formula == "natural":
        sigma2 = rss + 2.0 * cv.lam * l1
    else:
        sigma2 = 0.5 * rss + cv.lam * l1
    if sigma2 <= 0:
        raise ValueError("pilot variance estimate is not positive")
    return sigma2, cv.lam, cv.beta


def natural_lasso_pilot(data: MultiPopDataset, *, folds: int = 10,
                        n_phi: int = 50, eps: float = 0.01,
                        formula: str = "natural", seed: int = 0) -> PilotVariances:
    """Run the pilot variance estimator on every population block."""
    sigma2 = np.empty(data.n_populations)
    phi = np.empty(data.n_populations)
    betas = []
    for j, b in enumerate(data.blocks):
        live = data.availability[:, j]
        s2, ph, beta = natural_lasso_sigma(
            b.y, b.X[:, live], folds=min(folds, b.n), n_phi=n_phi, eps=eps,
            formula=formula, seed=seed)
        full = np.zeros(data.n_features)
        full[live] = beta
        sigma2[j], phi[j] = s2, ph
        betas.append(full)
    return PilotVariances(sigma_check=np.sqrt(sigma2), phi=phi,
                          betas=tuple(betas), formula=formula)


def fit_heat_approx(data: MultiPopDataset, params: PenaltyParams,
                    config: SolverConfig | None = None, *,
                    pilot: PilotVariances | None = None,
                    pilot_folds: int = 10, pilot_formula: str = "natural",
                    seed: int = 0, theta0=None, cache=None) -> FitResult:
    """Two-step fit: pilot variances, then one fixed-precision solve.

    The coefficient estimate is the precision-scaled solution multiplied back
    by the pilot standard deviations, which the shared back-transform already
    performs for fixed precisions.
    """
    t0 = time.perf_counter()
    if pilot is None:
        pilot = natural_lasso_pilot(data, folds=pilot_folds,
                                    formula=pilot_formula, seed=seed)
    config = replace(config or SolverConfig(), rho_mode="fixed",
                     rho_fixed=1.0 / pilot.sigma_check)
    res = fit_heat(data, params, config, theta0=theta0, cache=cache,
                   estimator_label="heat-app")
    res.pilot = pilot
    res.seconds = time.perf_counter() - t0
    return res


def _enet_result(data: MultiPopDataset, labels, B_hat, intercepts, sigma,
                 cv: EnetCVResult, estimator: str, seconds: float) -> FitResult:
    idx = [data.label_index(lab) for lab in labels]
    scales = np.column_stack([data.blocks[j].column_scales for j in idx])
    B_std = B_hat * scales
    rho = 1.0 / sigma
    return FitResult(
        B_hat=B_hat, sigma_hat=sigma, intercepts=np.asarray(intercepts, float),
        B_std=B_std, theta=B_std * rho[None, :], rho=rho,
        objective_trace=np.zeros(0), kkt=cv.kkt, iterations=0,
        converged=cv.converged, estimator=estimator,
        lam=cv.lam, gamma=cv.alpha, params=None,
        feature_names=data.feature_names, population_labels=tuple(labels),
        seconds=seconds, extra={"alpha": cv.alpha, "cv_table": cv.table},
    )


def fit_sen(data: MultiPopDataset, population_label: str, *,
            cv_folds: int = 10, alphas=DEFAULT_ALPHAS, n_lambda: int = 50,
            eps: float = 0.01, seed: int = 0) -> FitResult:
    """Separate elastic net on one population with (lam, alpha) by CV."""
    t0 = time.perf_counter()
    j = data.label_index(population_label)
    block = data.blocks[j]
    y_raw, X_raw = block.raw()
    ids = fold_assignments(block.n, cv_folds, seed)
    cv = cv_elastic_net(y_raw, X_raw, ids, alphas=alphas, n_lambda=n_lambda,
                        eps=eps, standardize=True)
    sigma = np.array([max(float(np.sqrt(np.mean(cv.residuals ** 2))), 1e-12)])
    return _enet_result(data, (population_label,), cv.beta[:, None],
                        cv.intercepts, sigma, cv, "sen",
                        time.perf_counter() - t0)


def fit_sen_all(data: MultiPopDataset, **kwargs) -> FitResult:
    """Separate elastic nets for every population, merged into one result."""
    t0 = time.perf_counter()
    parts = [fit_sen(data, lab, **kwargs) for lab in data.labels]
    B_hat = np.column_stack([r.B_hat[:, 0] for r in parts])
    B_std = np.column_stack([r.B_std[:, 0] for r in parts])
    sigma = np.array([r.sigma_hat[0] for r in parts])
    rho = 1.0 / sigma
    return FitResult(
        B_hat=B_hat,
        sigma_hat=sigma,
        intercepts=np.array([r.intercepts[0] for r in parts]),
        B_std=B_std, theta=B_std * rho[None, :], rho=rho,
        objective_trace=np.zeros(0),
        kkt=max(r.kkt for r in parts),
        iterations=0,
        converged=all(r.converged for r in parts),
        estimator="sen",
        lam=float("nan"), gamma=float("nan"), params=None,
        feature_names=data.feature_names, population_labels=data.labels,
        seconds=time.perf_counter() - t0,
        extra={"per_population": [(r.lam, r.extra["alpha"]) for r in parts]},
    )


def fit_aen(data: MultiPopDataset, *, cv_folds: int = 10,
            alphas=DEFAULT_ALPHAS, n_lambda: int = 50, eps: float = 0.01,
            seed: int = 0) -> FitResult:
    """Pooled ("agnostic") elastic net: one coefficient vector for all rows.

    Rows from every population are stacked; populations keep distinct
    intercepts via within-group centering but share coefficients, which are
    reported replicated across the population columns.
    """
    if data.n_populations < 2:
        raise ValueError("pooled elastic net needs at least two populations")
    t0 = time.perf_counter()
    ys, Xs, grp, ids = [], [], [], []
    for j, b in enumerate(data.blocks):
        y_raw, X_raw = b.raw()
        ys.append(y_raw)
        Xs.append(X_raw)
        grp.append(np.full(b.n, j))
        ids.append(fold_assignments(b.n, cv_folds, seed))
    y = np.concatenate(ys)
    X = np.vstack(Xs)
    groups = np.concatenate(grp)
    fold_ids = np.concatenate(ids)
    cv = cv_elastic_net(y, X, fold_ids, groups=groups, alphas=alphas,
                        n_lambda=n_lambda, eps=eps, standardize=True)
    J = data.n_populations
    sigma = np.empty(J)
    for j in range(J):
        r = cv.residuals[groups == j]
        sigma[j] = max(float(np.sqrt(np.mean(r ** 2))), 1e-12)
    B_hat = np.repeat(cv.beta[:, None], J, axis=1)
    res = _enet_result(data, data.labels, B_hat, cv.intercepts, sigma, cv,
                       "aen", time.perf_counter() - t0)
    return res
