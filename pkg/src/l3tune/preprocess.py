"""Feature preprocessing fitted on training data only.

Order of the fitted pipeline: Yeo-Johnson (per-feature MLE lambda), then
standardisation, then correlation pruning. LOF outlier removal runs on the
transformed features plus the standardised log-runtime.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

LAMBDA_BOUNDS = (-5.0, 5.0)
LAMBDA_TOL = 1e-4
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateFeatureError(ValueError):
    pass


class SchemaMismatchError(ValueError):
    pass


def yeo_johnson(y, lmbda):
    """Yeo-Johnson transform of ``y`` (scalar or array) with broadcasting ``lmbda``."""
    y = np.asarray(y, dtype=np.float64)
    lmbda = np.asarray(lmbda, dtype=np.float64)
    y, lmbda = np.broadcast_arrays(y, lmbda)
    out = np.empty(y.shape, dtype=np.float64)
    pos = y >= 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lp = np.log1p(np.where(pos, y, 0.0))
        ln = np.log1p(np.where(pos, 0.0, -y))
        zero = lmbda == 0
        two = lmbda == 2
        out_pos = np.where(zero, lp, np.expm1(lmbda * lp) / np.where(zero, 1.0, lmbda))
        mu = 2.0 - lmbda
        out_neg = -np.where(two, ln, np.expm1(mu * ln) / np.where(two, 1.0, mu))
    out = np.where(pos, out_pos, out_neg)
    out = np.where(lmbda == 1, y, out)
    return out[()] if out.ndim == 0 else out


def yj_log_likelihood(values, lmbda: float) -> float:
    """Profile log-likelihood of the Yeo-Johnson model at ``lmbda``."""
    y = np.asarray(values, dtype=np.float64)
    n = y.size
    z = yeo_johnson(y, lmbda)
    var = np.var(z)
    if not np.isfinite(var) or var <= 0:
        return -np.inf
    return -0.5 * n * math.log(var) + (lmbda - 1.0) * float(np.sum(np.sign(y) * np.log1p(np.abs(y))))


def fit_lambda_mle(values, bounds=LAMBDA_BOUNDS, tol: float = LAMBDA_TOL) -> float:
    """Golden-section maximisation of :func:`yj_log_likelihood` over ``bounds``."""
    y = np.asarray(values, dtype=np.float64).ravel()
    if y.size == 0 or np.all(y == y[0]):
        raise DegenerateFeatureError("cannot fit lambda to a constant feature")
    a, b = bounds
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = yj_log_likelihood(y, c), yj_log_likelihood(y, d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = yj_log_likelihood(y, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = yj_log_likelihood(y, d)
    return 0.5 * (a + b)


@njit(cache=True)
def _knn_graph(points, k):
    n, d = points.shape
    idx = np.empty((n, k), np.int64)
    dist = np.empty((n, k))
    best_d = np.empty(k)
    best_i = np.empty(k, np.int64)
    for q in range(n):
        filled = 0
        for r in range(n):
            if r == q:
                continue
            s = 0.0
            for j in range(d):
                diff = points[q, j] - points[r, j]
                s += diff * diff
            if filled < k:
                pos = filled
                filled += 1
            elif s < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            # strict comparison keeps the earlier index ahead of equal distances
            while pos > 0 and best_d[pos - 1] > s:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = s
            best_i[pos] = r
        for j in range(k):
            idx[q, j] = best_i[j]
            dist[q, j] = math.sqrt(best_d[j])
    return idx, dist


def k_nearest(points, k: int) -> tuple:
    """Exact k nearest neighbours of every point among the others.

    Returns (indices, distances), each (n, k) sorted by distance; equal
    distances are resolved toward the lower index.
    """
    points = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    return _knn_graph(points, int(k))


def lof_scores(points, k: int = 20) -> np.ndarray:
    """Local outlier factor of every point (Euclidean, exactly k neighbours)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not n > k >= 1:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    nbr, dist = k_nearest(points, k)
    k_dist = dist.max(axis=1)
    reach = np.maximum(k_dist[nbr], dist)
    mean_reach = reach.mean(axis=1)
    with np.errstate(divide="ignore"):
        lrd = np.where(mean_reach > 0, 1.0 / np.where(mean_reach > 0, mean_reach, 1.0), np.inf)
    num = lrd[nbr]
    den = lrd[:, None]
    with np.errstate(invalid="ignore"):
        ratio = num / den
    # inf/inf: a duplicate sitting among duplicates is an inlier
    ratio = np.where(np.isinf(num) & np.isinf(den), 1.0, ratio)
    return ratio.mean(axis=1)


def remove_outliers(points, k: int = 20, threshold: float = 1.5) -> np.ndarray:
    """Boolean keep-mask dropping rows whose LOF exceeds ``threshold``."""
    if not threshold > 1:
        raise ValueError("threshold must be > 1")
    points = np.asarray(points, dtype=np.float64)
    if math.isinf(threshold):
        return np.ones(points.shape[0], dtype=bool)
    keep = lof_scores(points, k) <= threshold
    dropped = int((~keep).sum())
    if dropped > 0.2 * len(keep):
        log.warning("LOF removed %d of %d rows (more than 20%%)", dropped, len(keep))
    else:
        log.info("LOF removed %d of %d rows", dropped, len(keep))
    return keep


def prune_correlated(X, names: Sequence[str], threshold: float = 0.8) -> list:
    """Greedy removal of features in pairs with |Pearson r| above ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    X = np.asarray(X, dtype=np.float64)
    names = list(names)
    if X.shape[1] <= 1:
        return names
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs(np.corrcoef(X, rowvar=False))
    r = np.nan_to_num(r, nan=0.0)
    np.fill_diagonal(r, 0.0)
    alive = list(range(len(names)))
    while True:
        sub = r[np.ix_(alive, alive)]
        violating = np.flatnonzero((sub > threshold).any(axis=1))
        if violating.size == 0:
            break
        totals = sub.sum(axis=1)[violating]
        # later feature wins exact ties
        drop = violating[np.flatnonzero(totals == totals.max())[-1]]
        del alive[drop]
    return [names[i] for i in alive]


@dataclass(frozen=True)
class PreprocessConfig:
    lof_k: int = 20
    lof_threshold: float = 1.5
    corr_threshold: float = 0.8


@dataclass(frozen=True)
class FittedTransformer:
    """Persisted preprocessing state, aligned with ``kept_features``."""

    input_features: tuple
    kept_features: tuple
    lambdas: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    lof_k: int = 20
    lof_threshold: float = 1.5
    corr_threshold: float = 0.8
    kept_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        missing = [f for f in self.kept_features if f not in self.input_features]
        if missing:
            raise SchemaMismatchError(f"kept features {missing} not among inputs")
        if np.any(np.asarray(self.stds) <= 0):
            raise ValueError("stds must be positive")
        pos = {name: i for i, name in enumerate(self.input_features)}
        object.__setattr__(self, "kept_index", np.array([pos[f] for f in self.kept_features], dtype=np.int64))
        for attr in ("lambdas", "means", "stds"):
            arr = np.asarray(getattr(self, attr), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    def to_dict(self) -> dict:
        return {
            "input_features": list(self.input_features),
            "kept": list(self.kept_features),
            "lambdas": [float(v) for v in self.lambdas],
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "lof_k": self.lof_k,
            "lof_threshold": self.lof_threshold,
            "corr_threshold": self.corr_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedTransformer":
        return cls(tuple(d["input_features"]), tuple(d["kept"]), np.array(d["lambdas"], dtype=np.float64),
                   np.array(d["means"], dtype=np.float64), np.array(d["stds"], dtype=np.float64),
                   int(d["lof_k"]), float(d["lof_threshold"]), float(d["corr_threshold"]))


def fit_transformer(X, names: Sequence[str], config: PreprocessConfig = PreprocessConfig()) -> FittedTransformer:
    X = np.asarray(X, dtype=np.float64)
    names = tuple(names)
    if X.shape[1] != len(names):
        raise SchemaMismatchError(f"{X.shape[1]} columns but {len(names)} names")
    usable = [j for j in range(X.shape[1]) if not np.all(X[:, j] == X[0, j])]
    dropped = [names[j] for j in range(X.shape[1]) if j not in usable]
    if dropped:
        log.info("dropping constant features %s", dropped)
    lambdas = np.array([fit_lambda_mle(X[:, j]) for j in usable])
    Z = yeo_johnson(X[:, usable], lambdas)
    means = Z.mean(axis=0)
    stds = Z.std(axis=0)
    ok = stds > 0
    usable = [u for u, good in zip(usable, ok) if good]
    lambdas, means, stds, Z = lambdas[ok], means[ok], stds[ok], Z[:, ok]
    S = (Z - means) / stds
    kept = prune_correlated(S, [names[j] for j in usable], config.corr_threshold)
    sel = [[names[j] for j in usable].index(f) for f in kept]
    return FittedTransformer(names, tuple(kept), lambdas[sel], means[sel], stds[sel],
                             config.lof_k, config.lof_threshold, config.corr_threshold)


def apply_transformer(ft: FittedTransformer, X, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Transform rows of raw features; columns follow ``names`` (default: the fit-time inputs)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if names is None:
        if X.shape[1] != len(ft.input_features):
            raise SchemaMismatchError(
                f"expected {len(ft.input_features)} columns, got {X.shape[1]}")
        cols = ft.kept_index
    else:
        names = list(names)
        unknown = [f for f in names if f not in ft.input_features]
        missing = [f for f in ft.kept_features if f not in names]
        if unknown or missing:
            raise SchemaMismatchError(f"unknown features {unknown}, missing features {missing}")
        cols = np.array([names.index(f) for f in ft.kept_features], dtype=np.int64)
    return (yeo_johnson(X[:, cols], ft.lambdas) - ft.means) / ft.stds
