"""CART regression trees, random forests and gradient-boosted trees."""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .base import Regressor, tree_payload


def _prep(X, y):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    return X, y


def canonical_orders(X, y) -> np.ndarray:
    """Per-feature row orders sorted by (feature value, target); independent of row order."""
    return np.ascontiguousarray(np.stack([np.lexsort((y, X[:, f])) for f in range(X.shape[1])]))


def stable_orders(X) -> np.ndarray:
    return np.ascontiguousarray(np.stack([np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]))


def _grow(X, y, orders, max_depth, min_samples_leaf, lam=0.0, leaf_scale=1.0, n_sub=None, seed=0):
    d = X.shape[1]
    n_sub = d if n_sub is None else int(n_sub)
    out = _kernels.grow_tree(X, y, orders, int(max_depth), int(min_samples_leaf), float(lam),
                             float(leaf_scale), n_sub, np.uint64(seed))
    return out[:5], out[5]


def fit_tree(X, y, max_depth: int = 8, min_samples_leaf: int = 1) -> Regressor:
    X, y = _prep(X, y)
    if X.shape[0] < 2 * min_samples_leaf:
        raise ValueError("need at least 2 * min_samples_leaf rows")
    arrays, _ = _grow(X, y, canonical_orders(X, y), max_depth, min_samples_leaf)
    return Regressor("tree", {"max_depth": int(max_depth), "min_samples_leaf": int(min_samples_leaf)},
                     {"trees": [tree_payload(*arrays)]}, X.shape[1])


def fit_forest(X, y, n_trees: int = 100, max_depth: int = 16, min_samples_leaf: int = 1,
               feature_subsample: float = 1.0 / 3.0, seed: int = 0, bootstrap: bool = True) -> Regressor:
    """Bagged CART trees with per-split feature subsampling from a seeded generator."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 0.0 < feature_subsample <= 1.0:
        raise ValueError("feature_subsample must lie in (0, 1]")
    X, y = _prep(X, y)
    n, d = X.shape
    n_sub = max(1, min(d, math.ceil(feature_subsample * d)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        if bootstrap:
            rows = rng.integers(0, n, n)
            Xb, yb = np.ascontiguousarray(X[rows]), y[rows]
        else:
            Xb, yb = X, y
        tree_seed = int(rng.integers(0, 2**63 - 1))
        arrays, _ = _grow(Xb, yb, canonical_orders(Xb, yb), max_depth, min_samples_leaf,
                          n_sub=n_sub, seed=tree_seed)
        trees.append(tree_payload(*arrays))
    hp = {"n_trees": int(n_trees), "max_depth": int(max_depth), "min_samples_leaf": int(min_samples_leaf),
          "feature_subsample": float(feature_subsample), "seed": int(seed), "bootstrap": bool(bootstrap)}
    return Regressor("forest", hp, {"trees": trees}, d)


def fit_gbt(X, y, n_rounds: int = 200, learning_rate: float = 0.1, max_depth: int = 5,
            reg_lambda: float = 1.0, seed: int = 0, min_samples_leaf: int = 1) -> Regressor:
    """Squared-loss stagewise boosting of depth-limited trees on residuals.

    Leaf weight is learning_rate * sum(residual) / (count + reg_lambda). The
    training RMSE after each round is kept in ``diagnostics["train_rmse"]``.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    if reg_lambda < 0:
        raise ValueError("reg_lambda must be >= 0")
    X, y = _prep(X, y)
    orders = stable_orders(X)
    base = float(np.mean(y))
    pred = np.full(y.shape, base)
    trees, history = [], []
    for _ in range(n_rounds):
        resid = y - pred
        arrays, row_leaf = _grow(X, resid, orders, max_depth, min_samples_leaf,
                                 lam=reg_lambda, leaf_scale=learning_rate)
        pred = pred + arrays[4][row_leaf]
        trees.append(tree_payload(*arrays))
        history.append(float(np.sqrt(np.mean((y - pred) ** 2))))
    hp = {"n_rounds": int(n_rounds), "learning_rate": float(learning_rate), "max_depth": int(max_depth),
          "reg_lambda": float(reg_lambda), "seed": int(seed), "min_samples_leaf": int(min_samples_leaf)}
    reg = Regressor("gbt", hp, {"base": base, "trees": trees}, X.shape[1])
    reg.diagnostics["train_rmse"] = history
    return reg
