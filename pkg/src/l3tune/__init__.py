"""Per-machine thread-count tuning for BLAS Level-3 routines.

Install time: sample shapes, time every thread count, train runtime models,
pick the family with the best estimated speedup. Call time: predict the
runtime at each candidate thread count and run with the fastest.
"""

from .backend import ArchitectureProfile, SyntheticBackend, oracle_best_nt, synthetic_time
from .core import Precision, ProblemShape, Routine, TimingSample, flop_count, memory_footprint_bytes
from .harness import CollectionPlan, Dataset, collect, optimal_nt_labels, split
from .runtime import ModelArtifact, Predictor, RuntimeConfig, load

__version__ = "0.1.0"
