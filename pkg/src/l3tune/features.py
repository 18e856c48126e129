"""Polynomial feature vectors built from (shape, nt)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ProblemShape, Routine, check_shape

NAMES_3D = ("m", "k", "n", "nt", "m*k", "k*n", "m*n", "m*k+k*n+m*n",
            "m*k*n", "m*k*n/nt", "(m*k+k*n+m*n)/nt")
NAMES_2D = ("p", "q", "nt", "p*q", "p^2", "p^2+2*p*q", "p^2*q",
            "p^2*q/nt", "(p^2+2*p*q)/nt")


@dataclass(frozen=True)
class FeatureVector:
    names: tuple
    values: tuple

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")


def build_features_3d(m, k, n, nt) -> FeatureVector:
    return FeatureVector(NAMES_3D, tuple(features_3d(m, k, n, nt).tolist()))


def build_features_2d(p, q, nt) -> FeatureVector:
    return FeatureVector(NAMES_2D, tuple(features_2d(p, q, nt).tolist()))


def features_3d(m, k, n, nt) -> np.ndarray:
    """Vectorised 3-D features; inputs broadcast, output has a trailing axis of 11."""
    m, k, n, nt = (np.asarray(v, dtype=np.float64) for v in (m, k, n, nt))
    mem = m * k + k * n + m * n
    mkn = m * k * n
    cols = np.broadcast_arrays(m, k, n, nt, m * k, k * n, m * n, mem, mkn, mkn / nt, mem / nt)
    return np.stack(cols, axis=-1)


def features_2d(p, q, nt) -> np.ndarray:
    p, q, nt = (np.asarray(v, dtype=np.float64) for v in (p, q, nt))
    p2 = p * p
    mem = p2 + 2.0 * p * q
    flops = p2 * q
    cols = np.broadcast_arrays(p, q, nt, p * q, p2, mem, flops, flops / nt, mem / nt)
    return np.stack(cols, axis=-1)


def feature_role_map(routine: Routine) -> tuple:
    """Names of the shape dimensions bound to (m, k, n) or (p, q), in shape order."""
    if routine is Routine.GEMM:
        return ("m", "k", "n")
    if routine in (Routine.SYRK, Routine.SYR2K):
        return ("n", "k")
    return ("m", "n")


def feature_names(routine: Routine) -> tuple:
    return NAMES_3D if routine.arity == 3 else NAMES_2D


def bind_dims(routine: Routine, shape: ProblemShape) -> tuple:
    """(m, k, n) or (p, q) values for ``shape``; shape order already matches the binding."""
    check_shape(routine, shape)
    return shape.dims


def feature_matrix(routine: Routine, dims, nt) -> np.ndarray:
    """Rows of features for arrays of dims (n, arity or 3) and thread counts (n,)."""
    dims = np.asarray(dims, dtype=np.float64)
    if routine.arity == 3:
        return features_3d(dims[:, 0], dims[:, 1], dims[:, 2], nt)
    return features_2d(dims[:, 0], dims[:, 1], nt)


def sweep_features(routine: Routine, shape: ProblemShape, nt_candidates) -> np.ndarray:
    """Feature rows of one shape at every candidate thread count."""
    dims = bind_dims(routine, shape)
    nt = np.asarray(nt_candidates, dtype=np.float64)
    if routine.arity == 3:
        return features_3d(dims[0], dims[1], dims[2], nt)
    return features_2d(dims[0], dims[1], nt)
