"""Runtime regressors: OLS, elastic net, CART, random forest, boosted trees, kNN."""

from .base import FAMILIES, Regressor, SchemaError, canonical_family, predict
from .knn import fit_knn
from .linear import ConvergenceWarning, fit_elastic_net, fit_ols
from .trees import fit_forest, fit_gbt, fit_tree
from .tuning import DEFAULT_GRIDS, QUICK_GRIDS, TuningGrid, cv_rmse, expand_grid, fit, group_folds, rmse, tune

__all__ = [
    "FAMILIES", "Regressor", "SchemaError", "canonical_family", "predict",
    "fit_ols", "fit_elastic_net", "fit_tree", "fit_forest", "fit_gbt", "fit_knn",
    "ConvergenceWarning", "DEFAULT_GRIDS", "QUICK_GRIDS", "TuningGrid", "cv_rmse",
    "expand_grid", "fit", "group_folds", "rmse", "tune",
]
