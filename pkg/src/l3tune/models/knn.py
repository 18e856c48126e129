"""k-nearest-neighbour regression on the stored training matrix."""

import numpy as np

from .base import Regressor


def fit_knn(X, y, k: int = 5) -> Regressor:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k must lie in [1, {X.shape[0]}]")
    payload = {"X": [[float(v) for v in row] for row in X], "y": [float(v) for v in y]}
    return Regressor("knn", {"k": int(k)}, payload, X.shape[1])
