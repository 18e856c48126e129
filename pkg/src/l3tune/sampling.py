"""Scrambled Halton sampling of problem shapes under a memory cap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_CAP_BYTES,
    Precision,
    ProblemShape,
    Routine,
    memory_footprint_bytes,
)

# digits kept per coordinate; permutations that move 0 make the tail non-zero
N_DIGITS = 32
DEFAULT_DIM_MIN = 32
BASES_3D = (2, 3, 4)
BASES_2D = (2, 3)

_MAX_PROBE = 10**6
_MIN_ACCEPT_RATE = 1e-3


class SamplerConfigError(ValueError):
    pass


class InfeasibleDomainError(RuntimeError):
    pass


def default_bases(routine: Routine) -> tuple:
    return BASES_3D if routine.arity == 3 else BASES_2D


def square_dim_max(routine: Routine, precision: Precision, cap_bytes: int) -> int:
    """Largest d such that the all-d instance of ``routine`` fits in ``cap_bytes``."""
    per_d2 = memory_footprint_bytes(routine, precision, ProblemShape.of(*[1] * routine.arity))
    d = math.isqrt(cap_bytes // per_d2)
    while d > 1 and memory_footprint_bytes(routine, precision, ProblemShape.of(*[d] * routine.arity)) > cap_bytes:
        d -= 1
    return max(d, 1)


@dataclass
class SamplerConfig:
    bases: tuple
    seed: int = 0
    dim_min: Sequence[int] = (DEFAULT_DIM_MIN,)
    dim_max: Sequence[int] = (8192,)
    cap_bytes: int = DEFAULT_CAP_BYTES
    # None draws per-base permutations from ``seed``; pass explicit lists to override
    permutations: Optional[Sequence[Sequence[int]]] = field(default=None, repr=False)

    def __post_init__(self):
        self.bases = tuple(int(b) for b in self.bases)
        if any(b < 2 for b in self.bases):
            raise SamplerConfigError(f"Halton bases must be >= 2, got {self.bases}")
        arity = len(self.bases)
        self.dim_min = _broadcast(self.dim_min, arity, "dim_min")
        self.dim_max = _broadcast(self.dim_max, arity, "dim_max")
        for lo, hi in zip(self.dim_min, self.dim_max):
            if lo < 1 or hi < lo:
                raise SamplerConfigError(f"need 1 <= dim_min <= dim_max, got {lo}..{hi}")
        if self.cap_bytes <= 0:
            raise SamplerConfigError("cap_bytes must be positive")
        if self.permutations is None:
            rng = np.random.default_rng(self.seed)
            self.permutations = tuple(tuple(int(v) for v in rng.permutation(b)) for b in self.bases)
        else:
            perms = tuple(tuple(int(v) for v in p) for p in self.permutations)
            for b, p in zip(self.bases, perms):
                if sorted(p) != list(range(b)):
                    raise SamplerConfigError(f"{p} is not a permutation of range({b})")
            self.permutations = perms

    @classmethod
    def default(cls, routine: Routine, precision: Precision, seed: int = 0,
                cap_bytes: int = DEFAULT_CAP_BYTES, dim_min: int = DEFAULT_DIM_MIN) -> "SamplerConfig":
        dmax = square_dim_max(routine, precision, cap_bytes)
        return cls(bases=default_bases(routine), seed=seed, dim_min=(dim_min,),
                   dim_max=(max(dmax, dim_min),), cap_bytes=cap_bytes)

    @classmethod
    def unscrambled(cls, bases, **kwargs) -> "SamplerConfig":
        return cls(bases=bases, permutations=[range(b) for b in bases], **kwargs)

    def to_dict(self) -> dict:
        return {
            "bases": list(self.bases),
            "seed": self.seed,
            "dim_min": list(self.dim_min),
            "dim_max": list(self.dim_max),
            "cap_bytes": self.cap_bytes,
        }


def _broadcast(values, arity, name):
    values = tuple(int(v) for v in np.atleast_1d(values))
    if len(values) == 1:
        return values * arity
    if len(values) != arity:
        raise SamplerConfigError(f"{name} needs 1 or {arity} entries, got {len(values)}")
    return values


def halton_value(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``."""
    if base < 2:
        raise SamplerConfigError(f"base must be >= 2, got {base}")
    if index < 1:
        raise ValueError("index must be >= 1")
    value, scale = 0.0, 1.0 / base
    while index:
        index, digit = divmod(index, base)
        value += digit * scale
        scale /= base
    return value


def scrambled_radical_inverse(index: int, base: int, perm: Sequence[int]) -> float:
    value, scale = 0.0, 1.0 / base
    for _ in range(N_DIGITS):
        index, digit = divmod(index, base)
        value += perm[digit] * scale
        scale /= base
    return value


def scrambled_halton_point(index: int, config: SamplerConfig) -> np.ndarray:
    if index < 1:
        raise ValueError("index must be >= 1")
    return np.array([scrambled_radical_inverse(index, b, p)
                     for b, p in zip(config.bases, config.permutations)])


def scrambled_halton_block(start: int, count: int, config: SamplerConfig) -> np.ndarray:
    """Points for indices start .. start+count-1, shape (count, len(bases)).

    Same digit-by-digit accumulation as :func:`scrambled_radical_inverse`.
    """
    idx0 = np.arange(start, start + count, dtype=np.int64)
    out = np.empty((count, len(config.bases)))
    for j, (b, perm) in enumerate(zip(config.bases, config.permutations)):
        perm = np.asarray(perm, dtype=np.float64)
        idx = idx0.copy()
        value = np.zeros(count)
        scale = 1.0 / b
        for _ in range(N_DIGITS):
            idx, digit = np.divmod(idx, b)
            value += perm[digit] * scale
            scale /= b
        out[:, j] = value
    return out


def map_to_shape(point, routine: Routine, precision: Precision,
                 config: SamplerConfig) -> Optional[ProblemShape]:
    """Log-uniform map of a unit-cube point to a shape; ``None`` when over the cap."""
    lo = np.asarray(config.dim_min, dtype=np.float64)
    ratio = np.asarray(config.dim_max, dtype=np.float64) / lo
    shape = ProblemShape.of(*np.rint(lo * ratio ** np.asarray(point, dtype=np.float64)))
    if memory_footprint_bytes(routine, precision, shape) > config.cap_bytes:
        return None
    return shape


def iter_shapes(routine: Routine, precision: Precision, config: SamplerConfig) -> Iterator[ProblemShape]:
    if len(config.bases) != routine.arity:
        raise SamplerConfigError(
            f"{routine.name} needs {routine.arity} bases, got {len(config.bases)}")
    lo = np.asarray(config.dim_min, dtype=np.float64)
    ratio = np.asarray(config.dim_max, dtype=np.float64) / lo
    block = 4096
    start, accepted = 1, 0
    while True:
        pts = scrambled_halton_block(start, block, config)
        dims = np.rint(lo * ratio ** pts)
        for offset, row in enumerate(dims):
            index = start + offset
            if index == _MAX_PROBE and accepted < _MIN_ACCEPT_RATE * _MAX_PROBE:
                raise InfeasibleDomainError(
                    f"only {accepted} of the first {_MAX_PROBE} points fit under {config.cap_bytes} bytes")
            shape = ProblemShape.of(*row)
            if memory_footprint_bytes(routine, precision, shape) <= config.cap_bytes:
                accepted += 1
                yield shape
        start += block


def sample_shapes(routine: Routine, precision: Precision, n_target: int,
                  config: SamplerConfig) -> list:
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    out = []
    for shape in iter_shapes(routine, precision, config):
        out.append(shape)
        if len(out) == n_target:
            return out
    return out
