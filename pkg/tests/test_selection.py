import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l3tune.core import Precision, ProblemShape, Routine
from l3tune.features import NAMES_3D
from l3tune.harness import Dataset, IncompleteDatasetError
from l3tune.models import Regressor, fit_knn, fit_ols
from l3tune.preprocess import FittedTransformer, apply_transformer, fit_transformer
from l3tune.selection import (
    TABLE_COLUMNS,
    SpeedupReport,
    estimated_speedup,
    measure_eval_time,
    oracle_report,
    select_family,
    speedup,
    speedups_from_choices,
    table_csv,
)
from l3tune.training import eval_time, raw_features

G, D = Routine.GEMM, Precision.DOUBLE


def always_max_nt_model():
    """Predicted ln time = -nt: the largest candidate always looks cheapest."""
    ft = FittedTransformer(NAMES_3D, ("nt",), np.array([1.0]), np.array([0.0]), np.array([1.0]))
    return ft, Regressor("ols", {}, {"coef": [-1.0], "intercept": 0.0}, 1)


def memorising_model(ds):
    """1-NN on the test set itself: predictions equal the measured log-times."""
    F = raw_features(ds)
    ft = fit_transformer(F, NAMES_3D)
    return ft, fit_knn(apply_transformer(ft, F), np.log(ds.time_s), 1)


def test_reference_pair_arithmetic():
    assert round(speedup(11.001, 4.430), 3) == 2.483
    assert speedup(11.001, 4.430, 0.0) == pytest.approx(2.4833, abs=1e-4)


def test_perfect_predictor(small_dataset):
    ft, reg = memorising_model(small_dataset)
    rep = estimated_speedup(reg, ft, small_dataset, t_eval=0.0)
    shapes, cands, table = small_dataset.sweep_table()
    np.testing.assert_allclose(rep.s, table[:, -1] / table.min(axis=1), rtol=1e-12)
    assert np.all(rep.s >= 1.0)
    np.testing.assert_array_equal(rep.s, oracle_report(small_dataset).s)


def test_degenerate_predictor(small_dataset):
    ft, reg = always_max_nt_model()
    t_eval = 1e-5
    rep = estimated_speedup(reg, ft, small_dataset, t_eval=t_eval)
    _, cands, table = small_dataset.sweep_table()
    assert set(rep.chosen_nt) == {cands[-1]}
    np.testing.assert_allclose(rep.s, table[:, -1] / (table[:, -1] + t_eval), rtol=1e-15)
    assert np.all(rep.s < 1)


def test_oracle_upper_bounds_every_predictor(small_dataset, rng):
    oracle = oracle_report(small_dataset).s
    _, cands, _ = small_dataset.sweep_table()
    for _ in range(5):
        picks = {}
        chooser = lambda s: picks.setdefault(s, int(rng.choice(cands)))  # noqa: E731
        t_eval = float(rng.uniform(0, 1e-4))
        _, _, s = speedups_from_choices(small_dataset, chooser, t_eval)
        assert np.all(s <= oracle)
    ft, reg = always_max_nt_model()
    assert np.all(estimated_speedup(reg, ft, small_dataset, 0.0).s <= oracle)


def test_chosen_time_never_beats_sweep_minimum(small_dataset):
    shapes, cands, table = small_dataset.sweep_table()
    F = raw_features(small_dataset)
    ft = fit_transformer(F, NAMES_3D)
    reg = fit_ols(apply_transformer(ft, F), np.log(small_dataset.time_s))
    rep = estimated_speedup(reg, ft, small_dataset, 0.0)
    t_chosen = table[:, -1] / rep.s
    assert np.all(t_chosen >= table.min(axis=1) * (1 - 1e-12))


def test_order_invariance(small_dataset, rng):
    ft, reg = memorising_model(small_dataset)
    a = estimated_speedup(reg, ft, small_dataset, 1e-5)
    perm = rng.permutation(len(small_dataset))
    b = estimated_speedup(reg, ft, small_dataset.subset(perm), 1e-5)
    assert b.mean_s == pytest.approx(a.mean_s, rel=1e-12)
    assert sorted(b.s) == pytest.approx(sorted(a.s), rel=1e-12)


def test_incomplete_sweep_rejected(small_dataset):
    ft, reg = always_max_nt_model()
    with pytest.raises(IncompleteDatasetError):
        estimated_speedup(reg, ft, small_dataset.subset(np.arange(len(small_dataset)) != 5), 0.0)


def test_report_statistics():
    s = [1.0, 2.0, 3.0, 4.0, 10.0]
    rep = SpeedupReport("gbt", "dgemm", [], [], s, 1e-4)
    assert rep.mean_s == 4.0
    assert rep.std_s == pytest.approx(np.std(s, ddof=1))
    assert (rep.min_s, rep.max_s) == (1.0, 10.0)
    assert rep.quartiles == (2.0, 3.0, 4.0)
    csv = table_csv([rep]).splitlines()
    assert csv[0] == "routine," + ",".join(TABLE_COLUMNS) == "routine,mean,std,min,25%,50%,75%,max"
    assert csv[1].startswith("dgemm,4.000000,")


def report(family, routine, mean, t_eval):
    return SpeedupReport(family, routine, [], [], [mean, mean], t_eval)


def test_select_dominating_family():
    reps = {"ols": [report("ols", "dgemm", 1.1, 1e-5), report("ols", "dsymm", 1.0, 1e-5)],
            "gbt": [report("gbt", "dgemm", 1.5, 1e-4), report("gbt", "dsymm", 1.3, 1e-4)]}
    assert select_family(reps) == "gbt"


def test_select_tie_goes_to_cheaper():
    a = {"gbt": [report("gbt", "dgemm", 1.4, 1e-4)], "tree": [report("tree", "dgemm", 1.4 + 5e-13, 1e-5)]}
    assert select_family(a) == "tree"
    b = {"tree": [report("tree", "dgemm", 1.4, 1e-5)], "gbt": [report("gbt", "dgemm", 1.4 + 5e-13, 1e-4)]}
    assert select_family(b) == "tree"


def test_select_needs_common_routines():
    with pytest.raises(ValueError):
        select_family({"a": [report("a", "dgemm", 1, 0)], "b": [report("b", "dsymm", 1, 0)]})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.5, 3.0), min_size=2, max_size=6, unique=True))
def test_select_is_argmax(means):
    reps = {f"f{i}": [report(f"f{i}", "dgemm", m, 0.0)] for i, m in enumerate(means)}
    assert select_family(reps) == f"f{int(np.argmax(means))}"


@pytest.fixture
def trained(trained_small):
    return trained_small


def test_gbt_beats_ols_end_to_end(trained):
    prep, fams = trained
    reps = {}
    for fam, tf in fams.items():
        art = tf.artifact
        reps[fam] = [estimated_speedup(art.regressor, art.transformer, prep.test, eval_time(tf, 200))]
    assert reps["gbt"][0].mean_s > reps["ols"][0].mean_s
    assert select_family(reps) == "gbt"


def test_eval_time_sanity(trained, rng):
    prep, fams = trained
    ols = fams["ols"].artifact
    t_ols = measure_eval_time(ols.regressor, ols.transformer, G, list(range(1, 33)), repetitions=300)
    assert 0 < t_ols < 1e-2
    Xk = rng.normal(size=(10_000, len(ols.transformer.kept_features)))
    knn = fit_knn(Xk, rng.normal(size=10_000), 5)
    t_knn = measure_eval_time(knn, ols.transformer, G, list(range(1, 33)), repetitions=30)
    assert t_knn > t_ols


def test_eval_time_scales_at_most_linearly(trained):
    gbt = trained[1]["gbt"].artifact

    def best_of(cands):
        return min(measure_eval_time(gbt.regressor, gbt.transformer, G, cands, repetitions=300) for _ in range(3))

    t16, t32 = best_of(list(range(1, 17))), best_of(list(range(1, 33)))
    assert t32 <= 3 * t16
