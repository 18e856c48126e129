import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l3tune.backend import BackendError, BackendUnavailableError, SyntheticBackend, oracle_best_nt, synthetic_time
from l3tune.core import Precision, ProblemShape, Routine, TimingSample, memory_footprint_bytes
from l3tune.harness import (
    CSV_HEADER,
    CollectionPlan,
    Dataset,
    DatasetFormatError,
    IncompleteDatasetError,
    collect,
    optimal_nt_labels,
    read_csv,
    split,
    to_csv_text,
)
from l3tune.sampling import SamplerConfig, sample_shapes

G, D = Routine.GEMM, Precision.DOUBLE


def gemm_shapes(n, seed=1):
    return sample_shapes(G, D, n, SamplerConfig.default(G, D, seed=seed))


def make_ds(rows, routine=G):
    samples = [TimingSample(routine, D, ProblemShape.of(*dims), nt, t) for dims, nt, t in rows]
    return Dataset.from_samples(samples)


def test_single_shape_noise_off_is_exact(quiet_profile):
    s = ProblemShape.of(100, 200, 300)
    ds = collect(CollectionPlan(G, D, [s], [1, 2], SyntheticBackend(quiet_profile)))
    assert len(ds) == 2
    for sample in ds.samples():
        assert sample.time_s == synthetic_time(quiet_profile, G, D, s, sample.nt)


def test_cardinality(quiet_profile):
    shapes = gemm_shapes(1000)
    ds = collect(CollectionPlan(G, D, shapes, list(range(1, 33, 2)), SyntheticBackend(quiet_profile),
                                repetitions=1))
    assert len(ds) == 16000


def test_median_of_repetitions(profile):
    s = ProblemShape.of(64, 64, 64)
    ds = collect(CollectionPlan(G, D, [s], [4], SyntheticBackend(profile), repetitions=3))
    reps = sorted(synthetic_time(profile, G, D, s, 4, r) for r in range(3))
    assert ds.time_s[0] == reps[1]


def test_csv_layout(tmp_path, profile):
    shapes = [ProblemShape.of(40, 50), ProblemShape.of(33, 1000)]
    out = tmp_path / "syrk.csv"
    ds = collect(CollectionPlan(Routine.SYRK, Precision.SINGLE, shapes, [1, 3], SyntheticBackend(profile)), out)
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1].startswith("ssyrk,single,40,50,0,1,")
    digits = lines[1].split(",")[-1].split("e")[0].replace(".", "").lstrip("0")
    assert len(digits) <= 9
    back = read_csv(out)
    assert back.routine is Routine.SYRK and back.precision is Precision.SINGLE
    np.testing.assert_array_equal(back.dims, ds.dims)
    np.testing.assert_allclose(back.time_s, ds.time_s, rtol=1e-8)
    assert to_csv_text(back) == to_csv_text(ds)


@pytest.mark.parametrize("cut", [0.31, 0.5, 0.77])
def test_resume_after_truncation(tmp_path, profile, cut):
    shapes = gemm_shapes(25)
    plan = CollectionPlan(G, D, shapes, [1, 2, 8, 16, 32], SyntheticBackend(profile))
    full = tmp_path / "full.csv"
    collect(plan, full)
    part = tmp_path / "part.csv"
    data = full.read_bytes()
    part.write_bytes(data[: int(len(data) * cut)])  # usually mid-line
    resumed = collect(plan, part, resume=True)
    assert part.read_bytes() == data
    assert len(resumed) == 25 * 5
    assert to_csv_text(resumed) == data.decode()


def test_resume_complete_and_empty(tmp_path, profile):
    plan = CollectionPlan(G, D, gemm_shapes(3), [1, 2], SyntheticBackend(profile))
    out = tmp_path / "d.csv"
    collect(plan, out, resume=True)
    first = out.read_bytes()
    collect(plan, out, resume=True)
    assert out.read_bytes() == first


def test_resume_rejects_foreign_file(tmp_path, profile):
    plan = CollectionPlan(G, D, gemm_shapes(3), [1, 2], SyntheticBackend(profile))
    other = CollectionPlan(G, D, gemm_shapes(3, seed=9), [1, 2], SyntheticBackend(profile))
    out = tmp_path / "d.csv"
    collect(other, out)
    with pytest.raises(DatasetFormatError):
        collect(plan, out, resume=True)


class Flaky:
    max_nt = 32

    def __init__(self, inner, fail_shapes, transient=0):
        self.inner, self.fail_shapes, self.transient = inner, set(fail_shapes), transient
        self.calls = 0

    def execute(self, routine, precision, shape, nt, rep=0):
        self.calls += 1
        if shape in self.fail_shapes:
            raise BackendError("boom")
        if self.transient:
            self.transient -= 1
            raise BackendError("blip")
        return self.inner.execute(routine, precision, shape, nt, rep)


def test_failures_skip_shape_and_transients_retry(quiet_profile, caplog):
    shapes = gemm_shapes(4)
    backend = Flaky(SyntheticBackend(quiet_profile), [shapes[1]], transient=2)
    with caplog.at_level(logging.WARNING):
        ds = collect(CollectionPlan(G, D, shapes, [1, 2], backend, repetitions=1))
    assert ds.skipped == [shapes[1]]
    assert len(ds) == 3 * 2
    assert shapes[1] not in ds.shapes()
    assert any("skipping" in r.message for r in caplog.records)
    clean = collect(CollectionPlan(G, D, [shapes[0]], [1, 2], SyntheticBackend(quiet_profile), repetitions=1))
    np.testing.assert_array_equal(ds.time_s[:2], clean.time_s)


def test_unavailable_propagates():
    class Dead:
        max_nt = 4

        def execute(self, *a):
            raise BackendUnavailableError("gone")

    with pytest.raises(BackendUnavailableError):
        collect(CollectionPlan(G, D, gemm_shapes(1), [1], Dead()))


def test_plan_validation(profile):
    with pytest.raises(ValueError):
        CollectionPlan(G, D, [], [0, 1], SyntheticBackend(profile))
    with pytest.raises(ValueError):
        CollectionPlan(G, D, [], [1, 33], SyntheticBackend(profile))
    with pytest.raises(ValueError):
        CollectionPlan(G, D, [], [1], SyntheticBackend(profile), repetitions=0)
    assert CollectionPlan(G, D, [], [4, 1, 4], SyntheticBackend(profile)).nt_candidates == [1, 4]


def test_labels_argmin_and_ties():
    s = (10, 20, 30)
    assert optimal_nt_labels(make_ds([(s, 1, 2.0), (s, 2, 1.0), (s, 4, 1.5)])) == {ProblemShape.of(*s): 2}
    assert optimal_nt_labels(make_ds([(s, 4, 1.0), (s, 2, 1.0)])) == {ProblemShape.of(*s): 2}


def test_labels_incomplete():
    ds = make_ds([((1, 2, 3), 1, 1.0), ((1, 2, 3), 2, 1.0), ((4, 5, 6), 1, 1.0)])
    with pytest.raises(IncompleteDatasetError):
        optimal_nt_labels(ds)


def test_labels_match_oracle_when_noise_free(quiet_profile):
    shapes = gemm_shapes(150, seed=5)
    cands = list(range(1, 33))
    ds = collect(CollectionPlan(G, D, shapes, cands, SyntheticBackend(quiet_profile), repetitions=1))
    labels = optimal_nt_labels(ds)
    for s in shapes:
        assert labels[s] == oracle_best_nt(quiet_profile, G, D, s, cands)


def rows_for(shapes, nts=(1, 2)):
    return [(s.dims, nt, 1.0) for s in shapes for nt in nts]


def test_split_hundred_shapes(small_dataset):
    ds = small_dataset.subset(np.isin(small_dataset.shape_ids()[0], np.arange(100)))
    train, test = split(ds, 0.15, seed=7)
    tr, te = set(train.shapes()), set(test.shapes())
    assert len(te) == 15 and len(tr) == 85
    assert not tr & te
    assert len(train) + len(test) == len(ds)
    per_shape = {s: int((np.all(test.dims == np.array(s.dims), axis=1)).sum()) for s in te}
    assert set(per_shape.values()) == {8}


def test_split_strata_balance(small_dataset):
    _, shapes = small_dataset.shape_ids()
    train, test = split(small_dataset, 0.15, seed=1)
    fp = np.array([memory_footprint_bytes(G, D, s) for s in shapes])
    order = np.lexsort((np.arange(len(shapes)), fp))
    te = set(test.shapes())
    for stratum in np.array_split(order, 10):
        k = sum(shapes[i] in te for i in stratum)
        assert abs(k - 0.15 * len(stratum)) <= 1


def test_split_constant_footprint_many_shapes():
    # every GEMM shape with ab + bc + ac fixed has the same footprint
    target = 575
    shapes = [ProblemShape.of(a, b, c) for a in range(1, 60) for b in range(1, 60) for c in range(1, 60)
              if a * b + b * c + a * c == target]
    assert len(shapes) >= 40
    ds = make_ds(rows_for(shapes))
    train, test = split(ds, 0.15, seed=4)
    assert len(test.shapes()) == int(np.floor(0.15 * len(shapes) + 0.5))
    assert not set(train.shapes()) & set(test.shapes())


def test_split_few_shapes_warns(caplog):
    shapes = [ProblemShape.of(10 * i, 5, 5) for i in range(1, 8)]
    with caplog.at_level(logging.WARNING):
        train, test = split(make_ds(rows_for(shapes)), 0.3, seed=0)
    assert len(test.shapes()) == 2
    assert any("stratification" in r.message for r in caplog.records)


def test_split_validation_and_determinism(small_dataset):
    with pytest.raises(ValueError):
        split(small_dataset, 0.0)
    with pytest.raises(ValueError):
        split(small_dataset, 1.0)
    a = split(small_dataset, 0.15, seed=11)[1]
    b = split(small_dataset, 0.15, seed=11)[1]
    c = split(small_dataset, 0.15, seed=12)[1]
    assert a.shapes() == b.shapes()
    assert a.shapes() != c.shapes()


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 200), st.floats(0.05, 0.5), st.integers(0, 2**32 - 1))
def test_split_properties(n, frac, seed):
    shapes = [ProblemShape.of(*s.dims) for s in gemm_shapes(n, seed=seed % 97)]
    ds = make_ds(rows_for(list(dict.fromkeys(shapes))))
    n_unique = len(ds.shapes())
    train, test = split(ds, frac, seed=seed)
    tr, te = set(train.shapes()), set(test.shapes())
    assert not tr & te
    assert len(tr) + len(te) == n_unique
    assert len(te) == int(np.floor(frac * n_unique + 0.5))
