"""Ordinary least squares and elastic net."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from . import _kernels
from .base import Regressor

log = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-8
ENET_TOL = 1e-6
ENET_MAX_SWEEPS = 10_000


class ConvergenceWarning(UserWarning):
    pass


def _center(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    return X, y, X - x_mean, y - y_mean, x_mean, y_mean


def fit_ols(X, y) -> Regressor:
    """Least squares with intercept via SVD; a 1e-8 ridge rescues rank deficiency."""
    X, y, Xc, yc, x_mean, y_mean = _center(X, y)
    n, d = X.shape
    coef, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
    ridge = False
    if rank < d:
        log.warning("design matrix has rank %d < %d; using ridge %g", rank, d, RIDGE_FALLBACK)
        coef = np.linalg.solve(Xc.T @ Xc + RIDGE_FALLBACK * np.eye(d), Xc.T @ yc)
        ridge = True
    intercept = float(y_mean - x_mean @ coef)
    reg = Regressor("ols", {}, {"coef": [float(v) for v in coef], "intercept": intercept}, d)
    reg.diagnostics["ridge_fallback"] = ridge
    return reg


def fit_elastic_net(X, y, alpha: float = 1e-3, l1_ratio: float = 0.5,
                    tol: float = ENET_TOL, max_sweeps: int = ENET_MAX_SWEEPS) -> Regressor:
    """Coordinate descent on (1/2n)|y - Xb|^2 + alpha*(l1_ratio*|b|_1 + (1-l1_ratio)/2*|b|^2)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if not 0.0 <= l1_ratio <= 1.0:
        raise ValueError("l1_ratio must lie in [0, 1]")
    X, y, Xc, yc, x_mean, y_mean = _center(X, y)
    n, d = X.shape
    G = Xc.T @ Xc / n
    c = Xc.T @ yc / n
    beta, sweeps, converged = _kernels.enet_cd(G, c, float(alpha), float(l1_ratio), float(tol),
                                               int(max_sweeps), np.zeros(d))
    if not converged:
        warnings.warn(f"elastic net did not converge in {max_sweeps} sweeps", ConvergenceWarning)
    intercept = float(y_mean - x_mean @ beta)
    reg = Regressor("elastic_net", {"alpha": float(alpha), "l1_ratio": float(l1_ratio)},
                    {"coef": [float(v) for v in beta], "intercept": intercept}, d)
    reg.diagnostics.update(sweeps=sweeps, converged=converged)
    return reg
