"""Install-time data gathering: per-shape thread sweeps, dataset CSV I/O, labels, split."""

from __future__ import annotations

import hashlib
import io
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backend import BackendError, BackendUnavailableError, KernelBackend
from .core import (
    Precision,
    ProblemShape,
    Routine,
    TimingSample,
    memory_footprint_bytes,
    parse_routine_name,
    routine_name,
)

log = logging.getLogger(__name__)

CSV_HEADER = "routine,precision,dim1,dim2,dim3,nt,time_s"
_RETRIES = 3


class IncompleteDatasetError(ValueError):
    """A shape is missing one or more thread-count candidates."""


class DatasetFormatError(ValueError):
    pass


@dataclass
class CollectionPlan:
    routine: Routine
    precision: Precision
    shapes: list
    nt_candidates: list
    backend: KernelBackend
    repetitions: int = 3

    def __post_init__(self):
        self.nt_candidates = sorted(set(int(t) for t in self.nt_candidates))
        if not self.nt_candidates or self.nt_candidates[0] < 1:
            raise ValueError("nt_candidates must be positive integers")
        max_nt = getattr(self.backend, "max_nt", None)
        if max_nt is not None and self.nt_candidates[-1] > max_nt:
            raise ValueError(f"nt candidate {self.nt_candidates[-1]} exceeds max_nt={max_nt}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class Dataset:
    """Timing samples of a single routine/precision, stored column-wise."""

    routine: Routine
    precision: Precision
    dims: np.ndarray  # (n, 3) int64, dim3 = 0 for arity-2 routines
    nt: np.ndarray
    time_s: np.ndarray
    skipped: list = field(default_factory=list)

    @classmethod
    def from_samples(cls, samples: Sequence[TimingSample], routine=None, precision=None) -> "Dataset":
        if samples:
            routine = routine or samples[0].routine
            precision = precision or samples[0].precision
        if routine is None or precision is None:
            raise ValueError("empty sample list needs explicit routine and precision")
        for s in samples:
            if s.routine is not routine or s.precision is not precision:
                raise DatasetFormatError("a dataset holds one routine and precision")
        dims = np.array([_pad(s.shape) for s in samples], dtype=np.int64).reshape(-1, 3)
        return cls(routine, precision, dims,
                   np.array([s.nt for s in samples], dtype=np.int64),
                   np.array([s.time_s for s in samples], dtype=np.float64))

    def __len__(self):
        return len(self.nt)

    def shape_at(self, i: int) -> ProblemShape:
        return _unpad(self.dims[i], self.routine.arity)

    def samples(self) -> list:
        return [TimingSample(self.routine, self.precision, self.shape_at(i), int(self.nt[i]),
                             float(self.time_s[i])) for i in range(len(self))]

    def shapes(self) -> list:
        """Distinct shapes in order of first appearance."""
        _, first = np.unique(self.dims, axis=0, return_index=True)
        return [self.shape_at(i) for i in np.sort(first)]

    def shape_ids(self) -> tuple:
        """(per-row group id, list of shapes) with ids numbered by first appearance."""
        _, first, inverse = np.unique(self.dims, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return rank[inverse.reshape(-1)], [self.shape_at(first[j]) for j in order]

    def subset(self, mask) -> "Dataset":
        return Dataset(self.routine, self.precision, self.dims[mask], self.nt[mask], self.time_s[mask])

    def nt_candidates(self) -> list:
        return sorted(int(t) for t in np.unique(self.nt))

    def sweep_table(self, candidates: Optional[Sequence[int]] = None) -> tuple:
        """Per-shape times at every candidate: (shapes, candidates, times[n_shapes, n_cand]).

        Duplicate (shape, nt) rows keep the first occurrence.
        """
        candidates = sorted(candidates) if candidates is not None else self.nt_candidates()
        gid, shapes = self.shape_ids()
        col = {nt: j for j, nt in enumerate(candidates)}
        table = np.full((len(shapes), len(candidates)), np.nan)
        for g, nt, t in zip(gid[::-1], self.nt[::-1], self.time_s[::-1]):
            j = col.get(int(nt))
            if j is not None:
                table[g, j] = t
        missing = np.argwhere(np.isnan(table))
        if len(missing):
            g, j = missing[0]
            raise IncompleteDatasetError(
                f"shape {shapes[g]} has no timing for nt={candidates[j]} "
                f"({len(missing)} missing entries)")
        return shapes, candidates, table

    def digest(self) -> str:
        return hashlib.sha256(to_csv_text(self).encode()).hexdigest()


def _pad(shape: ProblemShape) -> tuple:
    return tuple(shape.dims) + (0,) * (3 - shape.arity)


def _unpad(row, arity: int) -> ProblemShape:
    return ProblemShape.of(*[int(v) for v in row[:arity]])


def format_row(routine: Routine, precision: Precision, shape: ProblemShape, nt: int, t: float) -> str:
    d1, d2, d3 = _pad(shape)
    return f"{routine_name(routine, precision)},{precision.name.lower()},{d1},{d2},{d3},{nt},{t:.9g}\n"


def to_csv_text(ds: Dataset) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for i in range(len(ds)):
        buf.write(format_row(ds.routine, ds.precision, ds.shape_at(i), int(ds.nt[i]), float(ds.time_s[i])))
    return buf.getvalue()


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_csv_text(ds))


def _parse_lines(lines, source="<csv>") -> list:
    if not lines or lines[0].strip() != CSV_HEADER:
        raise DatasetFormatError(f"{source}: expected header {CSV_HEADER!r}")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != 7:
            raise DatasetFormatError(f"{source}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            routine, precision = parse_routine_name(parts[0])
            d1, d2, d3, nt = (int(v) for v in parts[2:6])
            t = float(parts[6])
        except ValueError as exc:
            raise DatasetFormatError(f"{source}:{lineno}: {exc}") from None
        dims = (d1, d2, d3) if routine.arity == 3 else (d1, d2)
        samples.append(TimingSample(routine, precision, ProblemShape.of(*dims), nt, t))
    return samples


def read_csv(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    samples = _parse_lines(text.splitlines(), str(path))
    if not samples:
        raise DatasetFormatError(f"{path}: no samples")
    return Dataset.from_samples(samples)


def _time_pair(backend, routine, precision, shape, nt, repetitions) -> float:
    times = []
    for rep in range(repetitions):
        for attempt in range(_RETRIES + 1):
            try:
                times.append(backend.execute(routine, precision, shape, nt, rep))
                break
            except BackendUnavailableError:
                raise
            except BackendError as exc:
                if attempt == _RETRIES:
                    raise
                log.warning("timing %s nt=%d failed (%s), retrying", shape, nt, exc)
    return statistics.median(times)


def _resume_state(out_path: Path, plan: CollectionPlan) -> int:
    """Trim a partial trailing line and return how many complete rows are on disk."""
    if not out_path.exists() or out_path.stat().st_size == 0:
        return 0
    raw = out_path.read_bytes()
    if not raw.endswith(b"\n"):
        raw = raw[: raw.rfind(b"\n") + 1]
        out_path.write_bytes(raw)
    lines = raw.decode("utf-8").splitlines()
    if not lines:
        return 0
    samples = _parse_lines(lines, str(out_path))
    expected = list(_plan_keys(plan))
    for i, s in enumerate(samples):
        if i >= len(expected) or (s.shape, s.nt) != expected[i]:
            raise DatasetFormatError(f"{out_path}: existing row {i + 2} does not match the collection plan")
    return len(samples)


def _plan_keys(plan: CollectionPlan):
    for shape in plan.shapes:
        for nt in plan.nt_candidates:
            yield shape, nt


def collect(plan: CollectionPlan, out_path=None, resume: bool = False) -> Dataset:
    """Time every (shape, nt) pair; optionally stream rows to an append-only CSV.

    With ``resume`` the rows already present in ``out_path`` are kept and timing
    continues after them.
    """
    samples, skipped = [], []
    done = 0
    fh = None
    if out_path is not None:
        out_path = Path(out_path)
        if resume:
            done = _resume_state(out_path, plan)
            if done:
                samples = _parse_lines(out_path.read_text(encoding="utf-8").splitlines(), str(out_path))
        fh = open(out_path, "a" if done else "w", encoding="utf-8", newline="\n")
        if not done:
            fh.write(CSV_HEADER + "\n")
            fh.flush()
    try:
        n_cand = len(plan.nt_candidates)
        for s_idx, shape in enumerate(plan.shapes):
            if (s_idx + 1) * n_cand <= done:
                continue
            rows = []
            try:
                for nt in plan.nt_candidates:
                    if s_idx * n_cand + len(rows) < done:
                        rows.append(None)
                        continue
                    t = _time_pair(plan.backend, plan.routine, plan.precision, shape, nt, plan.repetitions)
                    rows.append(TimingSample(plan.routine, plan.precision, shape, nt, t))
            except BackendUnavailableError:
                raise
            except BackendError as exc:
                log.warning("skipping shape %s after %d retries: %s", shape, _RETRIES, exc)
                skipped.append(shape)
                continue
            for r in rows:
                if r is None:
                    continue
                samples.append(r)
                if fh is not None:
                    fh.write(format_row(r.routine, r.precision, r.shape, r.nt, r.time_s))
            if fh is not None:
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    ds = Dataset.from_samples(samples, plan.routine, plan.precision)
    ds.skipped = skipped
    return ds


def optimal_nt_labels(ds: Dataset) -> dict:
    """Shape -> measured-fastest nt (ties toward the smaller nt)."""
    shapes, cands, table = ds.sweep_table()
    best = np.argmin(table, axis=1)
    return {s: cands[j] for s, j in zip(shapes, best)}


def split(ds: Dataset, test_fraction: float = 0.15, seed: int = 0) -> tuple:
    """Shape-grouped split stratified by memory-footprint deciles.

    The test set gets round(test_fraction * n_shapes) shapes, shared out over the
    strata by largest remainder so each stratum is within one shape of its share.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    gid, shapes = ds.shape_ids()
    n = len(shapes)
    footprint = np.array([memory_footprint_bytes(ds.routine, ds.precision, s) for s in shapes])
    order = np.lexsort((np.arange(n), footprint))
    if n < 10:
        log.warning("only %d shapes; splitting without stratification", n)
        strata = [order]
    else:
        strata = np.array_split(order, 10)
    rng = np.random.default_rng(seed)
    total = int(math.floor(test_fraction * n + 0.5))
    share = np.array([test_fraction * len(s) for s in strata])
    counts = np.floor(share).astype(int)
    remainder = share - counts
    extra = total - counts.sum()
    if extra > 0:
        jitter = rng.permutation(len(strata))
        rank = np.lexsort((jitter, -remainder))
        counts[rank[:extra]] += 1
    elif extra < 0:
        rank = np.lexsort((np.arange(len(strata)), remainder))
        counts[rank[:-extra]] -= 1
    test_groups = []
    for members, c in zip(strata, counts):
        test_groups.extend(rng.permutation(members)[:c].tolist())
    is_test_group = np.zeros(n, dtype=bool)
    is_test_group[test_groups] = True
    test_rows = is_test_group[gid]
    return ds.subset(~test_rows), ds.subset(test_rows)
