"""Install-time model training: split, preprocess, outlier removal, tuning, fit."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import feature_matrix, feature_names
from .harness import Dataset, split
from .models import QUICK_GRIDS, DEFAULT_GRIDS, canonical_family, fit, predict, rmse, tune
from .preprocess import FittedTransformer, PreprocessConfig, apply_transformer, fit_transformer, remove_outliers
from .runtime import ModelArtifact
from .selection import measure_eval_time

log = logging.getLogger(__name__)

TEST_FRACTION = 0.15


def raw_features(ds: Dataset) -> np.ndarray:
    return feature_matrix(ds.routine, ds.dims[:, : ds.routine.arity], ds.nt)


def log_target(ds: Dataset) -> np.ndarray:
    return np.log(ds.time_s)


@dataclass
class PreparedData:
    """Train/test split with the fitted transformer and the LOF-filtered training rows."""

    train: Dataset
    test: Dataset
    transformer: FittedTransformer
    X_train: np.ndarray
    y_train: np.ndarray
    groups: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_outliers: int


def prepare(ds: Dataset, seed: int = 0, test_fraction: float = TEST_FRACTION,
            config: PreprocessConfig = PreprocessConfig(), remove: bool = True) -> PreparedData:
    train, test = split(ds, test_fraction, seed)
    names = feature_names(ds.routine)
    F_train = raw_features(train)
    ft = fit_transformer(F_train, names, config)
    X_train = apply_transformer(ft, F_train)
    y_train = log_target(train)
    groups, _ = train.shape_ids()
    n_out = 0
    if remove:
        y_std = (y_train - y_train.mean()) / (y_train.std() or 1.0)
        keep = remove_outliers(np.column_stack([X_train, y_std]), config.lof_k, config.lof_threshold)
        n_out = int((~keep).sum())
        X_train, y_train, groups = X_train[keep], y_train[keep], groups[keep]
    X_test = apply_transformer(ft, raw_features(test))
    return PreparedData(train, test, ft, X_train, y_train, groups, X_test, log_target(test), n_out)


@dataclass
class TrainedFamily:
    family: str
    artifact: ModelArtifact
    test_rmse: float
    cv_log: list = field(default_factory=list)


def train_family(prep: PreparedData, family: str, grid: Optional[dict] = None, folds: int = 5,
                 seed: int = 0, metadata: Optional[dict] = None) -> TrainedFamily:
    family = canonical_family(family)
    grid = DEFAULT_GRIDS[family] if grid is None else grid
    cv_log = []
    params = tune(family, grid, prep.X_train, prep.y_train, prep.groups, folds, seed, cv_log)
    if family in ("forest", "gbt"):
        params.setdefault("seed", seed)
    reg = fit(family, prep.X_train, prep.y_train, **params)
    test_rmse = rmse(predict(reg, prep.X_test), prep.y_test)
    meta = dict(metadata or {})
    meta.update(family=family, seed=seed, folds=folds, n_train_rows=int(len(prep.y_train)),
                n_test_rows=int(len(prep.y_test)), n_outliers=prep.n_outliers)
    created = os.environ.get("SOURCE_DATE_EPOCH")
    if created is not None:
        meta["created_epoch"] = int(created)
    art = ModelArtifact(prep.train.routine, prep.train.precision, prep.transformer, reg,
                        prep.train.nt_candidates(), meta)
    return TrainedFamily(family, art, test_rmse, cv_log)


def train(ds: Dataset, families: Sequence[str], seed: int = 0, folds: int = 5, grids: Optional[dict] = None,
          test_fraction: float = TEST_FRACTION, config: PreprocessConfig = PreprocessConfig()) -> tuple:
    """Full install-time training; returns (PreparedData, {family: TrainedFamily})."""
    prep = prepare(ds, seed, test_fraction, config)
    grids = grids or DEFAULT_GRIDS
    meta = {"dataset_digest": ds.digest(), "test_fraction": test_fraction}
    out = {}
    for fam in families:
        fam = canonical_family(fam)
        out[fam] = train_family(prep, fam, grids.get(fam, DEFAULT_GRIDS[fam]), folds, seed, meta)
        log.info("%s: test RMSE %.4g", fam, out[fam].test_rmse)
    return prep, out


def eval_time(tf: TrainedFamily, repetitions: int = 1000) -> float:
    art = tf.artifact
    return measure_eval_time(art.regressor, art.transformer, art.routine, art.nt_candidates,
                             repetitions=repetitions)


__all__ = ["PreparedData", "TrainedFamily", "prepare", "train", "train_family", "raw_features",
           "log_target", "eval_time", "QUICK_GRIDS", "DEFAULT_GRIDS", "TEST_FRACTION"]
