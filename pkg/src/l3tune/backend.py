"""Kernel backends: a deterministic synthetic multicore cost model and a CBLAS binding."""

from __future__ import annotations

import ctypes
import ctypes.util
import json
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .core import (
    Precision,
    ProblemShape,
    Routine,
    check_shape,
    flop_count,
    memory_footprint_bytes,
)

BLAS_LIB_ENV = "ADSALA_BLAS_LIB"


class BackendError(RuntimeError):
    """A kernel could not be executed."""


class BackendUnavailableError(BackendError):
    pass


class ThreadCountError(ValueError):
    pass


@dataclass(frozen=True)
class ArchitectureProfile:
    physical_cores: int = 16
    ht_level: int = 2
    per_core_rate: float = 1e9
    ht_throughput_factor: float = 0.3
    efficiency_alpha: float = 0.01
    bw_max: float = 1e10
    bw_half_sat: float = 4.0
    sync_cost: float = 1e-4
    noise_sigma: float = 0.02
    noise_seed: int = 42

    def __post_init__(self):
        if self.physical_cores < 1 or self.ht_level < 1:
            raise ValueError("physical_cores and ht_level must be >= 1")
        if self.per_core_rate <= 0 or self.bw_max <= 0:
            raise ValueError("rates must be positive")
        if not 0.0 <= self.ht_throughput_factor <= 1.0:
            raise ValueError("ht_throughput_factor must lie in [0, 1]")
        if self.efficiency_alpha < 0 or self.sync_cost < 0 or self.noise_sigma < 0:
            raise ValueError("efficiency_alpha, sync_cost and noise_sigma must be >= 0")
        if self.bw_half_sat < 0:
            raise ValueError("bw_half_sat must be >= 0")

    @property
    def max_nt(self) -> int:
        return self.physical_cores * self.ht_level

    def with_noise(self, sigma: float) -> "ArchitectureProfile":
        return ArchitectureProfile(**{**asdict(self), "noise_sigma": sigma})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ArchitectureProfile":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ArchitectureProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


class KernelBackend(Protocol):
    max_nt: int

    def execute(self, routine: Routine, precision: Precision, shape: ProblemShape,
                nt: int, rep: int = 0) -> float:
        ...


def _noise_z(profile: ArchitectureProfile, routine, precision, shape, nt, rep) -> float:
    dims = list(shape.dims) + [0] * (3 - shape.arity)
    key = [profile.noise_seed & 0xFFFFFFFFFFFFFFFF, list(Routine).index(routine),
           list(Precision).index(precision), *dims, nt, rep]
    return float(np.random.default_rng(np.random.SeedSequence(key)).standard_normal())


def synthetic_time(profile: ArchitectureProfile, routine: Routine, precision: Precision,
                   shape: ProblemShape, nt: int, rep: int = 0) -> float:
    """Kernel + data-copy + synchronisation time of one call at ``nt`` threads."""
    if not 1 <= nt <= profile.max_nt:
        raise ThreadCountError(f"nt={nt} outside [1, {profile.max_nt}]")
    check_shape(routine, shape)
    cores = profile.physical_cores
    effective = min(nt, cores) + profile.ht_throughput_factor * max(0, nt - cores)
    efficiency = 1.0 / (1.0 + profile.efficiency_alpha * (nt - 1))
    t_kernel = flop_count(routine, shape) / (profile.per_core_rate * effective * efficiency)
    t_copy = memory_footprint_bytes(routine, precision, shape) / (
        profile.bw_max * nt / (nt + profile.bw_half_sat))
    t_sync = profile.sync_cost * nt
    t = t_kernel + t_copy + t_sync
    if profile.noise_sigma > 0:
        t *= float(np.exp(profile.noise_sigma * _noise_z(profile, routine, precision, shape, nt, rep)))
    return t


def oracle_best_nt(profile: ArchitectureProfile, routine: Routine, precision: Precision,
                   shape: ProblemShape, candidates: Sequence[int]) -> int:
    """Exhaustive noise-free argmin over ``candidates``; ties go to the smaller nt."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    quiet = profile.with_noise(0.0) if profile.noise_sigma else profile
    best_nt, best_t = None, None
    for nt in sorted(candidates):
        t = synthetic_time(quiet, routine, precision, shape, nt)
        if best_t is None or t < best_t:
            best_nt, best_t = nt, t
    return best_nt


class SyntheticBackend:
    """Backend that returns :func:`synthetic_time` without running anything."""

    def __init__(self, profile: ArchitectureProfile):
        self.profile = profile

    @property
    def max_nt(self) -> int:
        return self.profile.max_nt

    def execute(self, routine, precision, shape, nt, rep=0):
        return synthetic_time(self.profile, routine, precision, shape, nt, rep)


# CBLAS enums
_ROW_MAJOR = 101
_NO_TRANS = 111
_LOWER = 122
_NON_UNIT = 131
_LEFT = 141

_THREAD_SETTERS = (
    "openblas_set_num_threads",
    "MKL_Set_Num_Threads",
    "mkl_set_num_threads",
    "bli_thread_set_num_threads",
    "omp_set_num_threads",
)


class CBLASBackend:
    """Times real CBLAS calls from a shared library loaded with ctypes.

    The thread count is a process-wide setting, so calls must not overlap.
    """

    def __init__(self, lib_path: Optional[str] = None, max_nt: Optional[int] = None, seed: int = 0):
        path = lib_path or os.environ.get(BLAS_LIB_ENV) or ctypes.util.find_library("openblas")
        if not path:
            raise BackendUnavailableError(
                f"no BLAS library configured (set {BLAS_LIB_ENV} or pass lib_path)")
        try:
            self.lib = ctypes.CDLL(path)
        except OSError as exc:
            raise BackendUnavailableError(f"cannot load BLAS library {path!r}: {exc}") from None
        self.lib_path = path
        self._set_threads = None
        for name in _THREAD_SETTERS:
            fn = getattr(self.lib, name, None)
            if fn is not None:
                fn.restype = None
                fn.argtypes = [ctypes.c_int]
                self._set_threads = fn
                break
        if self._set_threads is None:
            raise BackendUnavailableError(f"{path} exposes no known thread-control symbol")
        self.max_nt = max_nt or os.cpu_count() or 1
        self.seed = seed

    def _symbol(self, routine: Routine, precision: Precision):
        name = "cblas_" + precision.value + routine.value
        try:
            return getattr(self.lib, name)
        except AttributeError:
            raise BackendUnavailableError(f"{self.lib_path} has no symbol {name}") from None

    def execute(self, routine, precision, shape, nt, rep=0):
        if not 1 <= nt <= self.max_nt:
            raise ThreadCountError(f"nt={nt} outside [1, {self.max_nt}]")
        check_shape(routine, shape)
        fn = self._symbol(routine, precision)
        dtype = np.float32 if precision is Precision.SINGLE else np.float64
        scalar = ctypes.c_float if precision is Precision.SINGLE else ctypes.c_double
        rng = np.random.default_rng([self.seed, rep])
        one = scalar(1.0)

        def mat(r, c):
            return np.ascontiguousarray(rng.uniform(0.0, 1.0, (r, c)).astype(dtype))

        def ptr(a):
            return a.ctypes.data_as(ctypes.c_void_p)

        if routine is Routine.GEMM:
            m, k, n = shape.dims
            a, b, c = mat(m, k), mat(k, n), mat(m, n)
            args = (_ROW_MAJOR, _NO_TRANS, _NO_TRANS, m, n, k, one, ptr(a), k, ptr(b), n, one, ptr(c), n)
        elif routine is Routine.SYMM:
            m, n = shape.dims
            a, b, c = mat(m, m), mat(m, n), mat(m, n)
            args = (_ROW_MAJOR, _LEFT, _LOWER, m, n, one, ptr(a), m, ptr(b), n, one, ptr(c), n)
        elif routine is Routine.SYRK:
            n, k = shape.dims
            a, c = mat(n, k), mat(n, n)
            args = (_ROW_MAJOR, _LOWER, _NO_TRANS, n, k, one, ptr(a), k, one, ptr(c), n)
        elif routine is Routine.SYR2K:
            n, k = shape.dims
            a, b, c = mat(n, k), mat(n, k), mat(n, n)
            args = (_ROW_MAJOR, _LOWER, _NO_TRANS, n, k, one, ptr(a), k, ptr(b), k, one, ptr(c), n)
        else:
            m, n = shape.dims
            a, b = mat(m, m), mat(m, n)
            # keep the triangular solve well conditioned
            a += np.eye(m, dtype=dtype) * m
            args = (_ROW_MAJOR, _LEFT, _LOWER, _NO_TRANS, _NON_UNIT, m, n, one, ptr(a), m, ptr(b), n)
        fn.restype = None
        fn.argtypes = [type(v) if not isinstance(v, int) else ctypes.c_int for v in args]
        self._set_threads(nt)
        start = time.perf_counter()
        fn(*args)
        return time.perf_counter() - start
