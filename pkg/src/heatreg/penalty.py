"""Sparse group penalty over coefficient rows, with availability masks.

The penalty on a coefficient matrix ``Theta`` (rows = predictors, columns =
populations) is

    lam * sum_k w_k * ||Theta[k, B(k)]||_2  +  gamma * sum_k sum_{j in B(k)} |Theta[k, j]|

where ``B(k)`` is the set of populations in which predictor ``k`` is
available and ``w_k`` defaults to ``sqrt(|B(k)|)``.  With full availability
this reduces to the usual sparse group lasso with constant group weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DEFAULT_GAMMA_RATIOS = (0.0, 0.25, 0.5, 1.0)


def default_row_weights(row_masks: np.ndarray) -> np.ndarray:
    """Group weights sqrt(|B(k)|); zero for rows available nowhere."""
    return np.sqrt(row_masks.sum(axis=1).astype(np.float64))


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weights plus the per-row availability structure."""

    lam: float
    gamma: float
    row_masks: np.ndarray   # (p, J) bool
    row_weights: np.ndarray  # (p,)

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("penalty weights must be nonnegative")
        masks = np.asarray(self.row_masks, dtype=bool)
        w = np.asarray(self.row_weights, dtype=np.float64)
        if w.shape != (masks.shape[0],):
            raise ValueError("row_weights length must match row count")
        nonempty = masks.any(axis=1)
        if np.any(w[nonempty] <= 0):
            raise ValueError("row_weights must be positive for nonempty rows")
        object.__setattr__(self, "row_masks", masks)
        object.__setattr__(self, "row_weights", w)

    @classmethod
    def for_dataset(cls, data, lam: float, gamma: float,
                    row_weights: np.ndarray | None = None) -> "PenaltyParams":
        masks = np.asarray(data.availability, dtype=bool)
        if row_weights is None:
            row_weights = default_row_weights(masks)
        return cls(lam=float(lam), gamma=float(gamma),
                   row_masks=masks, row_weights=np.asarray(row_weights, float))

    def with_lam(self, lam: float, gamma: float | None = None) -> "PenaltyParams":
        return replace(self, lam=float(lam),
                       gamma=self.gamma if gamma is None else float(gamma))


def _penalty_value_clean(theta: np.ndarray, params: PenaltyParams) -> float:
    """Penalty for iterates already known to respect the masks (hot path)."""
    group = np.linalg.norm(theta, axis=1)
    return float(params.lam * np.dot(params.row_weights, group)
                 + params.gamma * np.abs(theta).sum())


def penalty_value(theta: np.ndarray, params: PenaltyParams) -> float:
    """Evaluate the penalty; entries outside the masks must be exactly zero."""
    theta = np.asarray(theta, dtype=np.float64)
    masks = params.row_masks
    if theta.shape != masks.shape:
        raise ValueError("theta shape does not match row masks")
    if np.any(theta[~masks] != 0.0):
        raise ValueError("nonzero coefficient outside availability mask")
    return _penalty_value_clean(theta, params)


def prox_sparse_group(v: np.ndarray, t: float, lam: float, gamma: float,
                      weight: float = 1.0) -> np.ndarray:
    """Proximal operator of ``t * (lam*weight*||.||_2 + gamma*||.||_1)`` on one row.

    Computed as elementwise soft-thresholding at ``t*gamma`` followed by group
    shrinkage of the survivor at ``t*lam*weight``.
    """
    if t <= 0:
        raise ValueError("step size must be positive")
    v = np.asarray(v, dtype=np.float64)
    u = np.sign(v) * np.maximum(np.abs(v) - t * gamma, 0.0)
    if lam == 0 or weight == 0:
        return u
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        return np.zeros_like(u)
    return u * max(0.0, 1.0 - t * lam * weight / nrm)


def prox_matrix(V: np.ndarray, t: float, params: PenaltyParams) -> np.ndarray:
    """Row-wise prox over a full coefficient matrix; masked entries stay zero."""
    if t <= 0:
        raise ValueError("step size must be positive")
    masks = params.row_masks
    U = np.sign(V) * np.maximum(np.abs(V) - t * params.gamma, 0.0)
    U[~masks] = 0.0
    if params.lam > 0:
        nrm = np.linalg.norm(U, axis=1)
        shrink = np.zeros_like(nrm)
        live = nrm > 0
        shrink[live] = np.maximum(
            0.0, 1.0 - t * params.lam * params.row_weights[live] / nrm[live])
        U *= shrink[:, None]
    return U


def _null_gradient_rows(data, rho: np.ndarray) -> np.ndarray:
    """Row magnitudes driving the zero-solution optimality condition.

    Row k of the smooth-loss gradient at Theta = 0 is, per population j,
    ``-(rho_j / n) * X_j[:, k]^T y_j``; the threshold condition works with the
    negated gradient.
    """
    n = data.n_total
    p, J = data.n_features, data.n_populations
    C = np.zeros((p, J))
    for j, b in enumerate(data.blocks):
        C[:, j] = rho[j] * (b.X.T @ b.y) / n
    C[~data.availability] = 0.0
    return C


def lambda_max(data, rho: np.ndarray, gamma_ratio: float = 0.0,
               row_weights: np.ndarray | None = None) -> float:
    """Smallest lam for which Theta = 0 solves the fixed-precision problem.

    With ``gamma = gamma_ratio * lam``, the zero matrix is optimal iff for
    every row ``||soft(c_k, gamma)||_2 <= lam * w_k`` where ``c_k`` is the
    negated gradient row at zero.  Each row's critical lam is found by
    bisection (closed form when gamma_ratio == 0).
    """
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValueError("precisions must be positive")
    if gamma_ratio < 0:
        raise ValueError("gamma_ratio must be nonnegative")
    masks = data.availability
    if row_weights is None:
        row_weights = default_row_weights(masks)
    C = np.abs(_null_gradient_rows(data, rho))

    live = masks.any(axis=1) & (row_weights > 0)
    if not live.any():
        return 0.0
    C = C[live]
    m = masks[live]
    w = row_weights[live]
    hi = np.linalg.norm(np.where(m, C, 0.0), axis=1) / w
    if gamma_ratio == 0.0:
        return float(hi.max(initial=0.0))
    lo = np.zeros_like(hi)
    for _ in range(80):   # row-parallel bisection
        mid = 0.5 * (lo + hi)
        soft = np.where(m, np.maximum(C - gamma_ratio * mid[:, None], 0.0), 0.0)
        ok = np.linalg.norm(soft, axis=1) <= mid * w
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return float(hi.max(initial=0.0))


def lambda_grid(lam_max_value: float, size: int = 50, eps: float = 0.01) -> np.ndarray:
    """Descending geometric grid from lam_max down to eps * lam_max."""
    if size < 1:
        raise ValueError("grid size must be >= 1")
    if lam_max_value <= 0:
        return np.zeros(1)
    if size == 1:
        return np.asarray([lam_max_value])
    return np.geomspace(lam_max_value, eps * lam_max_value, size)
