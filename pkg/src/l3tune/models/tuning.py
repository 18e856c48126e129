"""Shape-grouped k-fold cross-validation over hyper-parameter grids."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .base import canonical_family, predict
from .knn import fit_knn
from .linear import fit_elastic_net, fit_ols
from .trees import fit_forest, fit_gbt, fit_tree

log = logging.getLogger(__name__)

FITTERS = {
    "ols": fit_ols,
    "elastic_net": fit_elastic_net,
    "tree": fit_tree,
    "forest": fit_forest,
    "gbt": fit_gbt,
    "knn": fit_knn,
}

DEFAULT_GRIDS = {
    "ols": {},
    "elastic_net": {"alpha": [1e-4, 1e-3, 1e-2, 1e-1, 1.0], "l1_ratio": [0.1, 0.5, 0.9]},
    "tree": {"max_depth": list(range(4, 17))},
    "forest": {"n_trees": [100, 300], "max_depth": [8, 16]},
    "gbt": {"n_rounds": [50, 200, 500], "learning_rate": [0.05, 0.1, 0.3],
            "max_depth": [3, 5, 7], "reg_lambda": [0.0, 1.0, 10.0]},
    "knn": {"k": [3, 5, 9, 15]},
}

# small grids for quick runs and tests
QUICK_GRIDS = {
    "ols": {},
    "elastic_net": {"alpha": [1e-4, 1e-2], "l1_ratio": [0.5]},
    "tree": {"max_depth": [6, 10]},
    "forest": {"n_trees": [30], "max_depth": [12]},
    "gbt": {"n_rounds": [200], "learning_rate": [0.1], "max_depth": [5, 7], "reg_lambda": [1.0]},
    "knn": {"k": [5, 9]},
}


def expand_grid(spec: dict) -> list:
    """{"a": [1, 2], "b": [3]} -> [{"a": 1, "b": 3}, {"a": 2, "b": 3}] (first key slowest)."""
    if not spec:
        return [{}]
    keys = list(spec)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(spec[k] for k in keys))]


@dataclass
class TuningGrid:
    grids: dict = field(default_factory=lambda: dict(DEFAULT_GRIDS))
    folds: int = 5

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        self.grids = {canonical_family(f): g for f, g in self.grids.items()}
        for fam, g in self.grids.items():
            if not expand_grid(g):
                raise ValueError(f"empty grid for {fam}")

    def candidates(self, family: str) -> list:
        return expand_grid(self.grids[canonical_family(family)])


def fit(family: str, X, y, **hyperparams):
    return FITTERS[canonical_family(family)](X, y, **hyperparams)


def group_folds(groups, folds: int, seed: int) -> np.ndarray:
    """Fold index per row; every group lands in exactly one fold."""
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    if len(uniq) < folds:
        raise ValueError(f"{len(uniq)} groups cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(len(uniq))
    fold_of_group = np.empty(len(uniq), dtype=np.int64)
    fold_of_group[perm] = np.arange(len(uniq)) % folds
    return fold_of_group[np.searchsorted(uniq, groups)]


def rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def cv_rmse(family: str, hyperparams: dict, X, y, fold_of_row) -> float:
    scores = []
    for f in np.unique(fold_of_row):
        test = fold_of_row == f
        reg = fit(family, X[~test], y[~test], **hyperparams)
        scores.append(rmse(predict(reg, X[test]), y[test]))
    return float(np.mean(scores))


def tune(family: str, grid, X, y, groups, folds: int = 5, seed: int = 0, log_rows: list = None) -> dict:
    """Grid entry with the lowest mean fold RMSE; ties keep the earlier entry.

    ``grid`` is a list of hyper-parameter dicts or a {name: values} mapping.
    Each evaluated entry is appended to ``log_rows`` as (params, rmse) when given.
    """
    family = canonical_family(family)
    candidates = expand_grid(grid) if isinstance(grid, dict) else list(grid)
    if not candidates:
        raise ValueError("grid must be non-empty")
    if len(candidates) == 1:
        if log_rows is not None:
            log_rows.append((candidates[0], float("nan")))
        return dict(candidates[0])
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fold_of_row = group_folds(groups, folds, seed)
    best, best_score = None, np.inf
    for params in candidates:
        score = cv_rmse(family, params, X, y, fold_of_row)
        log.info("%s %s cv_rmse=%.6g", family, params, score)
        if log_rows is not None:
            log_rows.append((params, score))
        if score < best_score:
            best, best_score = params, score
    return dict(best if best is not None else candidates[0])
