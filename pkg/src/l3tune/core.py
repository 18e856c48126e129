"""Routine descriptions, problem shapes and static memory/FLOP accounting.

Symmetric and triangular operands are counted as dense ``m x m`` storage.
SYMM, TRMM and TRSM are taken with side=Left, uplo=Lower, no transpose.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

MIB = 2**20
DEFAULT_CAP_BYTES = 500 * MIB

# 64-bit unsigned ceiling for byte counts
_MAX_BYTES = 2**63 - 1


class ShapeError(ValueError):
    """Shape arity or dimension values do not fit the routine."""


class Routine(enum.Enum):
    GEMM = "gemm"
    SYMM = "symm"
    SYRK = "syrk"
    SYR2K = "syr2k"
    TRMM = "trmm"
    TRSM = "trsm"

    @property
    def arity(self) -> int:
        return 3 if self is Routine.GEMM else 2


class Precision(enum.Enum):
    SINGLE = "s"
    DOUBLE = "d"

    @property
    def word_bytes(self) -> int:
        return 4 if self is Precision.SINGLE else 8


@dataclass(frozen=True, order=True)
class ProblemShape:
    dim1: int
    dim2: int
    dim3: Optional[int] = None

    def __post_init__(self):
        for d in self.dims:
            if int(d) != d or d < 1:
                raise ShapeError(f"dimensions must be positive integers, got {self.dims}")

    @property
    def dims(self) -> tuple:
        if self.dim3 is None:
            return (self.dim1, self.dim2)
        return (self.dim1, self.dim2, self.dim3)

    @property
    def arity(self) -> int:
        return len(self.dims)

    @classmethod
    def of(cls, *dims: int) -> "ProblemShape":
        return cls(*(int(d) for d in dims))

    def __str__(self):
        return "x".join(str(d) for d in self.dims)


@dataclass(frozen=True)
class TimingSample:
    routine: Routine
    precision: Precision
    shape: ProblemShape
    nt: int
    time_s: float

    def __post_init__(self):
        if self.nt < 1:
            raise ValueError(f"nt must be >= 1, got {self.nt}")
        if not self.time_s > 0:
            raise ValueError(f"time_s must be positive, got {self.time_s}")


def routine_name(routine: Routine, precision: Precision) -> str:
    """BLAS-style name, e.g. ``dgemm``."""
    return precision.value + routine.value


def parse_routine_name(name: str) -> tuple:
    """Inverse of :func:`routine_name`: ``"ssyrk"`` -> (Routine.SYRK, Precision.SINGLE)."""
    name = name.strip().lower()
    if len(name) < 2:
        raise ValueError(f"unknown routine {name!r}")
    try:
        return Routine(name[1:]), Precision(name[0])
    except ValueError:
        raise ValueError(f"unknown routine {name!r}") from None


def check_shape(routine: Routine, shape: ProblemShape) -> None:
    if shape.arity != routine.arity:
        raise ShapeError(
            f"{routine.name} expects {routine.arity} dimensions, got {shape.arity} ({shape})"
        )


def operand_shapes(routine: Routine, shape: ProblemShape) -> list:
    """(rows, cols) of each distinct matrix operand, in A, B, C order."""
    check_shape(routine, shape)
    if routine is Routine.GEMM:
        m, k, n = shape.dims
        return [(m, k), (k, n), (m, n)]
    a, b = shape.dims
    if routine is Routine.SYMM:
        m, n = a, b
        return [(m, m), (m, n), (m, n)]
    if routine is Routine.SYRK:
        n, k = a, b
        return [(n, k), (n, n)]
    if routine is Routine.SYR2K:
        n, k = a, b
        return [(n, k), (n, k), (n, n)]
    # TRMM / TRSM: B is overwritten in place
    m, n = a, b
    return [(m, m), (m, n)]


def memory_footprint_bytes(routine: Routine, precision: Precision, shape: ProblemShape) -> int:
    total = sum(r * c for r, c in operand_shapes(routine, shape)) * precision.word_bytes
    if total > _MAX_BYTES:
        raise OverflowError(f"memory footprint of {shape} overflows a 64-bit byte count")
    return total


def flop_count(routine: Routine, shape: ProblemShape) -> float:
    """Leading-order floating point operation count."""
    check_shape(routine, shape)
    if routine is Routine.GEMM:
        m, k, n = shape.dims
        return 2.0 * m * k * n
    a, b = (float(d) for d in shape.dims)
    if routine is Routine.SYMM:
        return 2.0 * a * a * b
    if routine is Routine.SYRK:
        return a * a * b
    if routine is Routine.SYR2K:
        return 2.0 * a * a * b
    return a * a * b
