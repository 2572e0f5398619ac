"""Cross-validation over the (lam, gamma) grid and evaluation metrics.

Folds are drawn within each population so every fold contains all of them;
fold fits are warm-started down each lam path, and out-of-fold prediction
error is pooled across populations with sample-size weights on the original
response scale.  Ties are broken toward the sparser model (larger lam, then
larger gamma).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .approx import fit_aen, fit_heat_approx, fit_sen_all, natural_lasso_pilot
from .dataset import MultiPopDataset
from .objective import FitResult
from .penalty import DEFAULT_GAMMA_RATIOS, PenaltyParams, lambda_grid, lambda_max
from .solver import (SolverConfig, _PopCache, fit_heat, fit_heat_path,
                     null_precisions)

HEAT_FAMILY = ("heat", "heat-app", "reheat", "heat-oracle")
ESTIMATORS = HEAT_FAMILY + ("sen", "aen")


def canonical_estimator(name: str) -> str:
    name = name.strip().lower().replace("_", "-")
    if name not in ESTIMATORS:
        raise ValueError(f"unknown estimator {name!r} (choose from {ESTIMATORS})")
    return name


@dataclass(frozen=True)
class CVPlan:
    """Knobs for one cross-validation run."""

    folds: int = 10
    grid_size: int = 50
    grid_eps: float = 0.01
    gamma_ratios: tuple = DEFAULT_GAMMA_RATIOS
    seed: int = 0
    score: str = "mse"
    grid: tuple | None = None   # explicit ((lam, gamma), ...) override

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.grid is not None and len(self.grid) == 0:
            raise ValueError("explicit grid must be nonempty")


@dataclass
class CVResult:
    lam: float
    gamma: float
    score: float
    table: list           # rows (lam, gamma, score)
    plan: CVPlan
    pilot: object | None = None


def make_folds(data: MultiPopDataset, folds: int, seed: int) -> dict[str, np.ndarray]:
    """Per-population fold ids; deterministic in (seed, population order)."""
    from .elastic_net import fold_assignments
    out = {}
    for j, b in enumerate(data.blocks):
        if b.n < folds:
            raise ValueError(
                f"population {b.label!r} has fewer samples than folds")
        out[b.label] = fold_assignments(b.n, folds, int(seed) * 1000003 + j)
    return out


@dataclass
class CVFolds:
    """Prebuilt fold datasets, reusable across estimators on the same data."""

    folds: int
    seed: int
    fold_ids: dict
    trains: list          # per fold: restandardized training dataset
    caches: list          # per fold: solver sufficient statistics
    held: list            # per fold: {label: (y_raw, X_raw)} held-out rows


def build_cv_folds(data: MultiPopDataset, folds: int, seed: int) -> CVFolds:
    fold_ids = make_folds(data, folds, seed)
    trains, caches, held = [], [], []
    raw = {b.label: b.raw() for b in data.blocks}
    for k in range(folds):
        train_rows = {lab: np.flatnonzero(ids != k)
                      for lab, ids in fold_ids.items()}
        train = data.subset(train_rows)
        for b in train.blocks:
            if np.ptp(b.y) == 0.0:
                raise ValueError(
                    f"population {b.label!r} has a constant response in fold {k}")
        trains.append(train)
        caches.append(_PopCache(train))
        part = {}
        for b in data.blocks:
            idx = np.flatnonzero(fold_ids[b.label] == k)
            y_raw, X_raw = raw[b.label]
            part[b.label] = (y_raw[idx], X_raw[idx])
        held.append(part)
    return CVFolds(folds=folds, seed=seed, fold_ids=fold_ids, trains=trains,
                   caches=caches, held=held)


def _variant_config(estimator: str, config: SolverConfig,
                    sigma_true=None, pilot=None) -> SolverConfig:
    if estimator == "heat":
        return replace(config, rho_mode="free", rho_fixed=None)
    if estimator == "reheat":
        return replace(config, rho_mode="unit", rho_fixed=None)
    if estimator == "heat-oracle":
        sigma = np.asarray(sigma_true, dtype=np.float64).reshape(-1)
        return replace(config, rho_mode="fixed", rho_fixed=1.0 / sigma)
    if estimator == "heat-app":
        return replace(config, rho_mode="fixed",
                       rho_fixed=1.0 / pilot.sigma_check)
    raise ValueError(estimator)


def _grid_rho(data: MultiPopDataset, estimator: str, sigma_true=None,
              pilot=None) -> np.ndarray:
    """Precisions used to anchor the lam grid for each variant."""
    if estimator == "heat":
        return null_precisions(data)
    if estimator == "reheat":
        return np.ones(data.n_populations)
    if estimator == "heat-oracle":
        return 1.0 / np.asarray(sigma_true, dtype=np.float64).reshape(-1)
    return 1.0 / pilot.sigma_check


def cross_validate(data: MultiPopDataset, estimator: str, plan: CVPlan,
                   config: SolverConfig | None = None, *,
                   sigma_true=None, pilot=None, pilot_folds: int = 10,
                   pilot_formula: str = "natural",
                   folds_cache: CVFolds | None = None) -> CVResult:
    """Select (lam, gamma) for a precision-handling variant by K-fold CV.

    For the two-step variant the pilot variances are estimated once on the
    full data and held fixed across folds, mirroring how the final fit will
    use them.  A prebuilt ``folds_cache`` lets several estimators share the
    fold datasets.
    """
    estimator = canonical_estimator(estimator)
    if estimator not in HEAT_FAMILY:
        raise ValueError("cross_validate covers the joint-estimator family only")
    config = config or SolverConfig()
    if estimator == "heat-app" and pilot is None:
        pilot = natural_lasso_pilot(data, folds=pilot_folds,
                                    formula=pilot_formula, seed=plan.seed)
    config = _variant_config(estimator, config, sigma_true, pilot)

    if plan.grid is not None:
        ratio_grids = None
        points = [(float(l), float(g)) for l, g in plan.grid]
    else:
        rho_grid = _grid_rho(data, estimator, sigma_true, pilot)
        ratio_grids = {}
        points = []
        for r in plan.gamma_ratios:
            lmax = lambda_max(data, rho_grid, r)
            lams = lambda_grid(lmax, size=plan.grid_size, eps=plan.grid_eps)
            ratio_grids[r] = lams
            points.extend((float(l), float(r * l)) for l in lams)

    if folds_cache is None:
        folds_cache = build_cv_folds(data, plan.folds, plan.seed)
    elif folds_cache.folds != plan.folds or folds_cache.seed != plan.seed:
        raise ValueError("folds_cache does not match the plan")

    n = data.n_total
    sse = {pt: 0.0 for pt in points}
    for k in range(plan.folds):
        train = folds_cache.trains[k]
        cache = folds_cache.caches[k]
        held = folds_cache.held[k]

        def eval_point(pt, res):
            total = 0.0
            for j, lab in enumerate(data.labels):
                y_te, X_te = held[lab]
                pred = res.intercepts[j] + X_te @ res.B_hat[:, j]
                total += float(((y_te - pred) ** 2).sum())
            sse[pt] += total

        if ratio_grids is None:
            theta0 = rho0 = None
            for lam, gamma in points:
                params = PenaltyParams.for_dataset(train, lam, gamma)
                res = fit_heat(train, params, config, theta0=theta0,
                               rho0=rho0, cache=cache)
                theta0, rho0 = res.theta, res.rho
                eval_point((lam, gamma), res)
        else:
            for r, lams in ratio_grids.items():
                fits = fit_heat_path(train, lams, r, config, cache=cache)
                for lam, res in zip(lams, fits):
                    eval_point((float(lam), float(r * lam)), res)

    table = [(lam, gamma, sse[(lam, gamma)] / n) for lam, gamma in points]
    best_score = np.inf
    best = points[0]
    for lam, gamma in sorted(points, key=lambda t: (-t[0], -t[1])):
        sc = sse[(lam, gamma)] / n
        if sc < best_score:
            best_score = sc
            best = (lam, gamma)
    return CVResult(lam=best[0], gamma=best[1], score=float(best_score),
                    table=table, plan=plan, pilot=pilot)


def fit_cv(data: MultiPopDataset, estimator: str, plan: CVPlan | None = None,
           config: SolverConfig | None = None, *, sigma_true=None,
           pilot_formula: str = "natural", pilot_folds: int = 10,
           alphas=None, n_lambda: int = 50,
           folds_cache: CVFolds | None = None) -> FitResult:
    """Cross-validate and refit any of the supported estimators by name."""
    estimator = canonical_estimator(estimator)
    plan = plan or CVPlan()
    config = config or SolverConfig()
    if estimator == "sen":
        from .elastic_net import DEFAULT_ALPHAS
        return fit_sen_all(data, cv_folds=plan.folds,
                           alphas=alphas or DEFAULT_ALPHAS,
                           n_lambda=n_lambda, seed=plan.seed)
    if estimator == "aen":
        from .elastic_net import DEFAULT_ALPHAS
        return fit_aen(data, cv_folds=plan.folds,
                       alphas=alphas or DEFAULT_ALPHAS,
                       n_lambda=n_lambda, seed=plan.seed)

    cv = cross_validate(data, estimator, plan, config, sigma_true=sigma_true,
                        pilot_folds=pilot_folds, pilot_formula=pilot_formula,
                        folds_cache=folds_cache)
    fit_config = _variant_config(estimator, config, sigma_true, cv.pilot)
    ratio = cv.gamma / cv.lam if cv.lam > 0 else 0.0
    if plan.grid is None and cv.lam > 0:
        # Refit down the path to the selection so the final solution is
        # warm-started exactly like the fold fits were.
        rho_grid = _grid_rho(data, estimator, sigma_true, cv.pilot)
        lams = lambda_grid(lambda_max(data, rho_grid, ratio),
                           size=plan.grid_size, eps=plan.grid_eps)
        keep = lams >= cv.lam * (1 - 1e-12)
        fits = fit_heat_path(data, lams[keep], ratio, fit_config,
                             estimator_label=estimator)
        res = fits[-1]
    else:
        params = PenaltyParams.for_dataset(data, cv.lam, cv.gamma)
        res = fit_heat(data, params, fit_config, estimator_label=estimator)
    if estimator == "heat-app":
        res.pilot = cv.pilot
    res.cv = cv
    return res


def rmse(beta_hat: np.ndarray, beta_star: np.ndarray) -> float:
    """Relative squared coefficient error ||b - b*||^2 / ||b*||^2."""
    beta_star = np.asarray(beta_star, dtype=np.float64)
    denom = float(beta_star @ beta_star)
    if denom == 0:
        raise ValueError("reference coefficients are all zero")
    diff = np.asarray(beta_hat, dtype=np.float64) - beta_star
    return float(diff @ diff) / denom


def rme(beta_hat: np.ndarray, beta_star: np.ndarray, X: np.ndarray) -> float:
    """Relative prediction-scale error ||X(b - b*)||^2 / ||X b*||^2."""
    X = np.asarray(X, dtype=np.float64)
    ref = X @ np.asarray(beta_star, dtype=np.float64)
    denom = float(ref @ ref)
    if denom == 0:
        raise ValueError("reference signal is zero")
    diff = X @ (np.asarray(beta_hat, dtype=np.float64) - beta_star)
    return float(diff @ diff) / denom


def test_r2(fit: FitResult, holdout: MultiPopDataset) -> dict[str, float]:
    """Per-population out-of-sample R^2, unclipped (can be negative)."""
    out = {}
    for lab in fit.population_labels:
        b = holdout.block(lab)
        y_raw, X_raw = b.raw()
        pred = fit.predict(X_raw, lab)
        sst = float(((y_raw - y_raw.mean()) ** 2).sum())
        sse = float(((y_raw - pred) ** 2).sum())
        out[lab] = 1.0 - sse / sst if sst > 0 else float("nan")
    return out


@dataclass
class MetricReport:
    """Per-population accuracy metrics against known true coefficients."""

    rmse: dict[str, float]
    rme: dict[str, float]
    r2_test: dict[str, float]
    support_sizes: dict[str, int]
    support_total: int
    support_shared: int
    sigma_hat: dict[str, float] = field(default_factory=dict)


def compute_metrics(fit: FitResult, B_star: np.ndarray,
                    train: MultiPopDataset,
                    holdout: MultiPopDataset | None = None) -> MetricReport:
    """Evaluate one fit against the generating truth (original units)."""
    rmse_d, rme_d, sizes, sig = {}, {}, {}, {}
    for col, lab in enumerate(fit.population_labels):
        j = train.label_index(lab)
        _, X_raw = train.blocks[j].raw()
        rmse_d[lab] = rmse(fit.B_hat[:, col], B_star[:, j])
        rme_d[lab] = rme(fit.B_hat[:, col], B_star[:, j], X_raw)
        sizes[lab] = int(np.count_nonzero(fit.B_hat[:, col]))
        sig[lab] = float(fit.sigma_hat[col])
    nz = fit.B_hat != 0.0
    r2 = test_r2(fit, holdout) if holdout is not None else {}
    return MetricReport(
        rmse=rmse_d, rme=rme_d, r2_test=r2, support_sizes=sizes,
        support_total=int(nz.any(axis=1).sum()),
        support_shared=int(nz.all(axis=1).sum()) if nz.shape[1] > 1 else
        int(nz.any(axis=1).sum()),
        sigma_hat=sig,
    )
