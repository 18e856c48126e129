"""Estimated-speedup scoring of model families and choice of the production family."""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ProblemShape, Routine, routine_name
from .harness import Dataset
from .models import Regressor
from .preprocess import FittedTransformer
from .sweep import SweepModel

TABLE_COLUMNS = ("mean", "std", "min", "25%", "50%", "75%", "max")
EVAL_REPETITIONS = 1000
TIE_TOL = 1e-12


def speedup(t_original: float, t_tuned: float, t_eval: float = 0.0) -> float:
    return t_original / (t_tuned + t_eval)


@dataclass
class SpeedupReport:
    family: str
    routine: str
    shapes: list
    chosen_nt: list
    s: np.ndarray
    t_eval_seconds: float
    stats: dict = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        self.s = s
        q25, q50, q75 = np.percentile(s, [25, 50, 75])
        self.stats = {
            "mean": float(s.mean()),
            "std": float(s.std(ddof=1)) if len(s) > 1 else 0.0,
            "min": float(s.min()),
            "25%": float(q25),
            "50%": float(q50),
            "75%": float(q75),
            "max": float(s.max()),
        }

    @property
    def mean_s(self) -> float:
        return self.stats["mean"]

    @property
    def std_s(self) -> float:
        return self.stats["std"]

    @property
    def min_s(self) -> float:
        return self.stats["min"]

    @property
    def max_s(self) -> float:
        return self.stats["max"]

    @property
    def quartiles(self) -> tuple:
        return self.stats["25%"], self.stats["50%"], self.stats["75%"]


def measure_eval_time(regressor: Regressor, transformer: FittedTransformer, routine: Routine,
                      nt_candidates, shape: Optional[ProblemShape] = None,
                      repetitions: int = EVAL_REPETITIONS) -> float:
    """Mean wall time of one full candidate sweep (features, transform, predict, argmin)."""
    model = SweepModel(routine, transformer, regressor, nt_candidates)
    if shape is None:
        shape = ProblemShape.of(*[512] * routine.arity)
    model.choose(shape)  # compile / warm caches outside the timed loop
    start = time.perf_counter()
    for _ in range(repetitions):
        model.choose(shape)
    return (time.perf_counter() - start) / repetitions


def speedups_from_choices(test: Dataset, choose: Callable[[ProblemShape], int], t_eval: float,
                          nt_candidates: Optional[Sequence[int]] = None) -> tuple:
    """Per-shape s = t(max nt) / (t(chosen nt) + t_eval) using measured sweep times."""
    shapes, cands, table = test.sweep_table(nt_candidates)
    col = {nt: j for j, nt in enumerate(cands)}
    chosen, s = [], []
    for i, shape in enumerate(shapes):
        nt = int(choose(shape))
        if nt not in col:
            raise ValueError(f"chosen nt={nt} is not a sweep candidate")
        chosen.append(nt)
        s.append(speedup(table[i, -1], table[i, col[nt]], t_eval))
    return shapes, chosen, np.array(s)


def estimated_speedup(regressor: Regressor, transformer: FittedTransformer, test: Dataset,
                      t_eval: float, nt_candidates: Optional[Sequence[int]] = None) -> SpeedupReport:
    cands = nt_candidates if nt_candidates is not None else test.nt_candidates()
    model = SweepModel(test.routine, transformer, regressor, cands)
    shapes, chosen, s = speedups_from_choices(test, model.choose, t_eval, cands)
    return SpeedupReport(regressor.family, routine_name(test.routine, test.precision), shapes, chosen, s, t_eval)


def oracle_report(test: Dataset, nt_candidates: Optional[Sequence[int]] = None) -> SpeedupReport:
    """Measured-optimum chooser with t_eval = 0: the upper bound for any predictor."""
    shapes, cands, table = test.sweep_table(nt_candidates)
    best = {shape: cands[int(np.argmin(table[i]))] for i, shape in enumerate(shapes)}
    shapes, chosen, s = speedups_from_choices(test, best.__getitem__, 0.0, cands)
    return SpeedupReport("oracle", routine_name(test.routine, test.precision), shapes, chosen, s, 0.0)


def select_family(reports: dict) -> str:
    """Family with the highest mean (over routines) of mean_s; near-ties go to smaller t_eval.

    ``reports`` maps family -> list of SpeedupReport (one per routine) or a single report.
    """
    scored = []
    routine_sets = set()
    for family, reps in reports.items():
        reps = [reps] if isinstance(reps, SpeedupReport) else list(reps)
        routine_sets.add(frozenset(r.routine for r in reps))
        scored.append((family, float(np.mean([r.mean_s for r in reps])),
                       float(np.mean([r.t_eval_seconds for r in reps]))))
    if len(routine_sets) > 1:
        raise ValueError("every family must be scored on the same routines")
    best = None
    for family, score, t_eval in scored:
        if best is None or score > best[1] + TIE_TOL:
            best = (family, score, t_eval)
        elif abs(score - best[1]) <= TIE_TOL and t_eval < best[2]:
            best = (family, score, t_eval)
    return best[0]


def table_csv(reports: Sequence[SpeedupReport]) -> str:
    """One CSV row per routine with mean,std,min,25%,50%,75%,max of s."""
    buf = io.StringIO()
    buf.write("routine," + ",".join(TABLE_COLUMNS) + "\n")
    for r in reports:
        buf.write(r.routine + "," + ",".join(f"{r.stats[c]:.6f}" for c in TABLE_COLUMNS) + "\n")
    return buf.getvalue()
