"""Loss functions for the precision-reparameterized model.

Writing ``rho_j = 1/sigma_j`` and ``theta_j = beta_j / sigma_j`` turns the
scaled negative log-likelihood into

    L(Theta, rho) = (1/2n) * sum_j [ ||rho_j*y_j - X_j theta_j||^2 - n_j*log(rho_j^2) ]

which is jointly convex in (Theta, rho) and leaves the penalty scale-free.
The functions here evaluate L, its Theta-gradient, the original-parameter
loss, the closed-form precision update, and a stationarity certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .penalty import PenaltyParams


@dataclass(frozen=True)
class CoefficientState:
    """A point (Theta, rho) of the reparameterized problem."""

    theta: np.ndarray  # (p, J)
    rho: np.ndarray    # (J,) positive

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        rho = np.asarray(self.rho, dtype=np.float64).reshape(-1)
        if theta.ndim != 2 or theta.shape[1] != rho.shape[0]:
            raise ValueError("theta must be (p, J) with J matching rho")
        if np.any(rho <= 0):
            raise ValueError("precisions must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", rho)


def loss_reparam(state: CoefficientState, data) -> float:
    """Reparameterized negative log-likelihood at (Theta, rho)."""
    n = data.n_total
    total = 0.0
    for j, b in enumerate(data.blocks):
        r = state.rho[j] * b.y - b.X @ state.theta[:, j]
        total += r @ r - b.n * np.log(state.rho[j] ** 2)
    return float(total / (2.0 * n))


def loss_original(B: np.ndarray, sigma: np.ndarray, data) -> float:
    """Negative log-likelihood in the original (B, sigma) parameters."""
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    n = data.n_total
    total = 0.0
    for j, b in enumerate(data.blocks):
        r = b.y - b.X @ B[:, j]
        total += (r @ r) / sigma[j] ** 2 + b.n * np.log(sigma[j] ** 2)
    return float(total / (2.0 * n))


def grad_theta(state: CoefficientState, data) -> np.ndarray:
    """Gradient of the smooth loss with respect to Theta.

    Column j is ``X_j^T (X_j theta_j - rho_j y_j) / n``.  Padded (all-zero)
    columns contribute exact zeros, so masks need no special handling here.
    """
    n = data.n_total
    G = np.zeros_like(state.theta)
    for j, b in enumerate(data.blocks):
        G[:, j] = b.X.T @ (b.X @ state.theta[:, j] - state.rho[j] * b.y) / n
    return G


def rho_root(s_yy: float, s_ytheta: float, n_j: float) -> float:
    """Positive root of ``rho^2*S_yy - rho*S_ytheta - n_j = 0``.

    This is the unique stationary point (and minimizer) of the strictly convex
    one-dimensional precision objective on (0, inf).
    """
    if s_yy <= 0:
        raise ValueError("response sum of squares must be positive")
    return float((s_ytheta + np.sqrt(s_ytheta ** 2 + 4.0 * s_yy * n_j))
                 / (2.0 * s_yy))


def rho_update(theta_j: np.ndarray, block) -> float:
    """Exact precision update for one population with Theta fixed."""
    s_yy = float(block.y @ block.y)
    s_yt = float(block.y @ (block.X @ theta_j))
    return rho_root(s_yy, s_yt, block.n)


def rho_gradient(state: CoefficientState, data) -> np.ndarray:
    """Partial derivatives of the smooth loss with respect to each rho_j."""
    n = data.n_total
    out = np.zeros(data.n_populations)
    for j, b in enumerate(data.blocks):
        s_yy = b.y @ b.y
        s_yt = b.y @ (b.X @ state.theta[:, j])
        out[j] = (state.rho[j] * s_yy - s_yt) / n - b.n / (n * state.rho[j])
    return out


def kkt_residual(state: CoefficientState, data, params: PenaltyParams,
                 include_rho: bool = True) -> float:
    """Distance of the current point from stationarity.

    Returns the largest row-wise distance between the negated Theta-gradient
    and the penalty subdifferential, plus (optionally) the largest precision
    gradient magnitude.  Zero exactly at a solution of the convex problem.
    """
    G = grad_theta(state, data)
    row = _theta_kkt_rows(G, state.theta, params)
    resid = float(row.max(initial=0.0))
    if include_rho:
        resid += float(np.abs(rho_gradient(state, data)).max(initial=0.0))
    return resid


def _theta_kkt_rows(G: np.ndarray, theta: np.ndarray,
                    params: PenaltyParams) -> np.ndarray:
    """Per-row distance from -grad to the penalty subdifferential."""
    masks = params.row_masks
    lam, gamma, w = params.lam, params.gamma, params.row_weights
    C = np.where(masks, -G, 0.0)
    T = np.where(masks, theta, 0.0)
    out = np.zeros(theta.shape[0])
    row_norm = np.linalg.norm(T, axis=1)
    nonempty = masks.any(axis=1)

    zero = (row_norm == 0.0) & nonempty
    if zero.any():
        # Entirely-zero rows: nearest subgradient uses the full L1 box and
        # the group-norm ball, leaving max(0, ||soft(c, gamma)|| - lam*w).
        soft = np.maximum(np.abs(C[zero]) - gamma, 0.0)
        soft[~masks[zero]] = 0.0
        out[zero] = np.maximum(
            0.0, np.linalg.norm(soft, axis=1) - lam * w[zero])

    live = (row_norm > 0.0) & nonempty
    if live.any():
        Tl, Cl, ml = T[live], C[live], masks[live]
        res = Cl - lam * w[live, None] * Tl / row_norm[live, None]
        nz = Tl != 0.0
        res_nz = np.where(nz, res - gamma * np.sign(Tl), 0.0)
        res_z = np.where(~nz & ml, np.maximum(np.abs(res) - gamma, 0.0), 0.0)
        out[live] = np.sqrt((res_nz ** 2 + res_z ** 2).sum(axis=1))
    return out


@dataclass
class FitResult:
    """Outcome of one model fit, in both original and standardized scales."""

    B_hat: np.ndarray            # (p, J) coefficients in original data units
    sigma_hat: np.ndarray        # (J,) error standard deviations
    intercepts: np.ndarray       # (J,)
    B_std: np.ndarray            # (p, J) coefficients on the standardized design
    theta: np.ndarray | None     # (p, J) precision-scaled coefficients
    rho: np.ndarray | None       # (J,)
    objective_trace: np.ndarray  # objective after each outer pass
    kkt: float
    iterations: int
    converged: bool
    estimator: str
    lam: float
    gamma: float
    params: PenaltyParams | None
    feature_names: tuple[str, ...]
    population_labels: tuple[str, ...]
    seconds: float = 0.0
    pilot: object | None = None
    cv: object | None = None
    extra: dict = field(default_factory=dict)

    @property
    def support(self) -> np.ndarray:
        """Boolean (p, J) mask of exactly-nonzero coefficients."""
        ref = self.theta if self.theta is not None else self.B_std
        return ref != 0.0

    def predict(self, X: np.ndarray, label: str) -> np.ndarray:
        """Fitted values for raw-unit rows of one population."""
        j = self.population_labels.index(label)
        return self.intercepts[j] + np.asarray(X, float) @ self.B_hat[:, j]
