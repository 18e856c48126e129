"""Prediction of log-runtime at every thread-count candidate for one shape.

This is the hot path of the runtime predictor and of evaluation-time
measurement: features, Yeo-Johnson, standardisation and model evaluation for
all candidates in compiled code.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import ProblemShape, Routine, check_shape
from .models import Regressor
from .models import _kernels
from .preprocess import FittedTransformer


@njit(cache=True)
def _yj(y, lmbda):
    if lmbda == 1.0:
        return y
    if y >= 0.0:
        lp = math.log1p(y)
        if lmbda == 0.0:
            return lp
        return math.expm1(lmbda * lp) / lmbda
    ln = math.log1p(-y)
    if lmbda == 2.0:
        return -ln
    mu = 2.0 - lmbda
    return -math.expm1(mu * ln) / mu


@njit(cache=True)
def transform_sweep(dims, nts, kept_index, lambdas, means, stds):
    """Transformed feature rows of one shape at each thread count in ``nts``."""
    n = nts.shape[0]
    d = kept_index.shape[0]
    arity = dims.shape[0]
    raw = np.empty(11 if arity == 3 else 9)
    Z = np.empty((n, d))
    for i in range(n):
        nt = nts[i]
        if arity == 3:
            m, k, nn = dims[0], dims[1], dims[2]
            mem = m * k + k * nn + m * nn
            mkn = m * k * nn
            raw[0] = m
            raw[1] = k
            raw[2] = nn
            raw[3] = nt
            raw[4] = m * k
            raw[5] = k * nn
            raw[6] = m * nn
            raw[7] = mem
            raw[8] = mkn
            raw[9] = mkn / nt
            raw[10] = mem / nt
        else:
            p, q = dims[0], dims[1]
            p2 = p * p
            mem = p2 + 2.0 * p * q
            flops = p2 * q
            raw[0] = p
            raw[1] = q
            raw[2] = nt
            raw[3] = p * q
            raw[4] = p2
            raw[5] = mem
            raw[6] = flops
            raw[7] = flops / nt
            raw[8] = mem / nt
        for j in range(d):
            Z[i, j] = (_yj(raw[kept_index[j]], lambdas[j]) - means[j]) / stds[j]
    return Z


class SweepModel:
    """Transformer + regressor bound to a routine and its thread-count candidates."""

    def __init__(self, routine: Routine, transformer: FittedTransformer, regressor: Regressor,
                 nt_candidates):
        self.routine = routine
        self.transformer = transformer
        self.regressor = regressor
        self.nt_candidates = [int(t) for t in sorted(nt_candidates)]
        self._nts = np.asarray(self.nt_candidates, dtype=np.float64)
        self._kept = np.ascontiguousarray(transformer.kept_index)
        self._lam = np.ascontiguousarray(transformer.lambdas)
        self._mu = np.ascontiguousarray(transformer.means)
        self._sd = np.ascontiguousarray(transformer.stds)
        if regressor.n_features != len(self._kept):
            raise ValueError(
                f"regressor expects {regressor.n_features} features, transformer keeps {len(self._kept)}")
        self._family = regressor.family
        self._compiled = regressor.compiled()

    def features(self, shape: ProblemShape) -> np.ndarray:
        check_shape(self.routine, shape)
        return transform_sweep(np.asarray(shape.dims, dtype=np.float64), self._nts,
                               self._kept, self._lam, self._mu, self._sd)

    def log_times(self, shape: ProblemShape) -> np.ndarray:
        """Predicted ln(seconds) at each candidate."""
        Z = self.features(shape)
        c = self._compiled
        fam = self._family
        if fam in ("ols", "elastic_net"):
            return Z @ c[0] + c[1]
        if fam == "knn":
            return _kernels.knn_predict(c[0], c[1], Z, c[2])
        out = _kernels.predict_trees(Z, *c)
        if fam == "forest":
            out = out / len(c[4])
        return out

    def choose(self, shape: ProblemShape) -> int:
        """Candidate with the smallest predicted time; ties go to the smaller nt."""
        return self.nt_candidates[int(np.argmin(self.log_times(shape)))]
