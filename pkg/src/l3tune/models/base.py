"""The fitted-regressor container shared by every model family."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels

FAMILIES = ("ols", "elastic_net", "tree", "forest", "gbt", "knn")

_ALIASES = {
    "linear": "ols",
    "enet": "elastic_net",
    "elasticnet": "elastic_net",
    "decision_tree": "tree",
    "cart": "tree",
    "random_forest": "forest",
    "rf": "forest",
    "xgboost": "gbt",
    "boosting": "gbt",
}


def canonical_family(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ValueError(f"unknown model family {name!r}; choose from {', '.join(FAMILIES)}")
    return key


@dataclass(eq=False)
class Regressor:
    """A fitted model: family tag, hyper-parameters and a JSON-ready payload.

    Payloads:
      ols / elastic_net: {"coef": [...], "intercept": x}
      tree:  {"trees": [tree]}
      forest: {"trees": [tree, ...]}
      gbt:   {"base": x, "trees": [tree, ...]}
      knn:   {"X": [[...], ...], "y": [...]}
    where tree = {"feature_index", "threshold", "left", "right", "leaf_value"}
    parallel node arrays (feature_index -1 marks a leaf).
    """

    family: str
    hyperparams: dict
    payload: dict
    n_features: int
    diagnostics: dict = field(default_factory=dict)
    _compiled: Optional[tuple] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"family": self.family, "hyperparams": dict(self.hyperparams),
                "n_features": self.n_features, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "Regressor":
        family = canonical_family(d["family"])
        return cls(family, dict(d.get("hyperparams", {})), d["payload"], int(d["n_features"]))

    def compiled(self) -> tuple:
        """Array form of the payload used by the prediction kernels (cached)."""
        if self._compiled is None:
            self._compiled = _compile(self)
        return self._compiled


def tree_payload(feature, threshold, left, right, value) -> dict:
    return {
        "feature_index": [int(v) for v in feature],
        "threshold": [float(v) for v in threshold],
        "left": [int(v) for v in left],
        "right": [int(v) for v in right],
        "leaf_value": [float(v) for v in value],
    }


def _tree_depth(left, right) -> int:
    depth = np.zeros(len(left), dtype=np.int64)
    for node in range(len(left)):
        if left[node] >= 0:
            depth[left[node]] = depth[right[node]] = depth[node] + 1
    return int(depth.max())


def _stack_trees(trees) -> tuple:
    """Concatenate trees into the branchless layout used by ``predict_trees``."""
    children, feats, thrs, vals, roots, depths = [], [], [], [], [], []
    offset = 0
    for t in trees:
        f = np.asarray(t["feature_index"], dtype=np.int64)
        lf = np.asarray(t["left"], dtype=np.int64)
        rt = np.asarray(t["right"], dtype=np.int64)
        if np.any((lf >= 0) & (rt != lf + 1)):
            raise ValueError("tree payload needs right child == left child + 1")
        leaf = f < 0
        ids = np.arange(len(f)) + offset
        children.append(np.where(leaf, ids, lf + offset))
        feats.append(np.where(leaf, 0, f))
        thrs.append(np.where(leaf, np.inf, np.asarray(t["threshold"], dtype=np.float64)))
        vals.append(np.asarray(t["leaf_value"], dtype=np.float64))
        roots.append(offset)
        depths.append(_tree_depth(lf, rt))
        offset += len(f)
    return (np.concatenate(children), np.concatenate(feats), np.concatenate(thrs),
            np.concatenate(vals), np.asarray(roots, dtype=np.int64), np.asarray(depths, dtype=np.int64))


def _compile(reg: Regressor) -> tuple:
    p = reg.payload
    if reg.family in ("ols", "elastic_net"):
        return (np.asarray(p["coef"], dtype=np.float64), float(p["intercept"]))
    if reg.family == "knn":
        X = np.ascontiguousarray(np.asarray(p["X"], dtype=np.float64).reshape(-1, reg.n_features))
        return (X, np.asarray(p["y"], dtype=np.float64), int(reg.hyperparams["k"]))
    stacked = _stack_trees(p["trees"])
    return stacked + (float(p.get("base", 0.0)),)


class SchemaError(ValueError):
    pass


def predict(reg: Regressor, X) -> np.ndarray:
    """Batch prediction; rows of ``X`` must follow the training column order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != reg.n_features:
        raise SchemaError(f"model expects {reg.n_features} features, got {X.shape[1]}")
    X = np.ascontiguousarray(X)
    c = reg.compiled()
    if reg.family in ("ols", "elastic_net"):
        coef, intercept = c
        return X @ coef + intercept
    if reg.family == "knn":
        return _kernels.knn_predict(c[0], c[1], X, c[2])
    out = _kernels.predict_trees(X, *c)
    if reg.family == "forest":
        out = out / len(c[4])
    return out
