import contextlib
import time

import numpy as np
import pytest

from l3tune.backend import ArchitectureProfile, SyntheticBackend
from l3tune.core import Precision, Routine
from l3tune.harness import CollectionPlan, collect
from l3tune.sampling import SamplerConfig, sample_shapes


@pytest.fixture(scope="session")
def profile():
    return ArchitectureProfile(physical_cores=16, ht_level=2, per_core_rate=1e9, ht_throughput_factor=0.3,
                               efficiency_alpha=0.01, bw_max=1e10, bw_half_sat=4.0, sync_cost=1e-4,
                               noise_sigma=0.02, noise_seed=42)


@pytest.fixture(scope="session")
def quiet_profile(profile):
    return profile.with_noise(0.0)


@pytest.fixture(scope="session")
def small_dataset(profile):
    """120 dgemm shapes x 8 thread counts, noisy."""
    cfg = SamplerConfig.default(Routine.GEMM, Precision.DOUBLE, seed=3)
    shapes = sample_shapes(Routine.GEMM, Precision.DOUBLE, 120, cfg)
    plan = CollectionPlan(Routine.GEMM, Precision.DOUBLE, shapes, [1, 2, 4, 8, 12, 16, 24, 32],
                          SyntheticBackend(profile))
    return collect(plan)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def trained_small(small_dataset):
    """(PreparedData, {family: TrainedFamily}) for OLS and GBT on the small dataset."""
    from l3tune.training import QUICK_GRIDS, train

    return train(small_dataset, ["ols", "gbt"], seed=0, folds=3, grids=QUICK_GRIDS, test_fraction=0.25)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Context manager recording one PASS/FAIL line per acceptance criterion.

    Usage: ``with criterion(3, "title") as note: ...; note("detail")``.
    """

    @contextlib.contextmanager
    def record(number, title):
        details = []
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield details.append
            status = "PASS"
        finally:
            line = f"criterion {number:>2} {status} ({time.perf_counter() - start:.1f}s) {title}"
            if details:
                line += ": " + "; ".join(details)
            _ACCEPTANCE_LINES.append(line)
            print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
