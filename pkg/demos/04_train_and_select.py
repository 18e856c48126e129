"""Train every model family on one routine and pick the one with the best speedup.

Speedup of a test shape is t(max nt) / (t(chosen nt) + t_eval), where t_eval
is the measured cost of running the predictor itself. The oracle row uses the
measured best nt and t_eval = 0, so no family can beat it.
"""

import warnings

from l3tune import ArchitectureProfile, CollectionPlan, SyntheticBackend, collect
from l3tune.core import Precision, Routine
from l3tune.models import ConvergenceWarning
from l3tune.sampling import SamplerConfig, sample_shapes
from l3tune.selection import estimated_speedup, oracle_report, select_family, table_csv
from l3tune.training import QUICK_GRIDS, eval_time, train

routine, precision = Routine.GEMM, Precision.DOUBLE
shapes = sample_shapes(routine, precision, 200, SamplerConfig.default(routine, precision, seed=42))
ds = collect(CollectionPlan(routine, precision, shapes, [1, 2, 4, 8, 12, 16, 24, 32],
                            SyntheticBackend(ArchitectureProfile())))

# On these features the elastic net's small-alpha grid points can stall; CV simply ranks them lower.
warnings.simplefilter("ignore", category=ConvergenceWarning)
families = ["ols", "elastic_net", "tree", "forest", "gbt", "knn"]
prep, trained = train(ds, families, seed=0, folds=3, grids=QUICK_GRIDS)

reports = {}
for fam, tf in trained.items():
    t_eval = eval_time(tf, repetitions=200)
    art = tf.artifact
    reports[fam] = estimated_speedup(art.regressor, art.transformer, prep.test, t_eval)
    print(f"{fam:>12}: test RMSE(ln t) {tf.test_rmse:.3f}  t_eval {t_eval * 1e6:7.1f} us"
          f"  mean s {reports[fam].mean_s:.3f}")

oracle = oracle_report(prep.test)
print(f"{'oracle':>12}: mean s {oracle.mean_s:.3f}")
print(f"\nselected family: {select_family(reports)}\n")
header, *rows = table_csv([*reports.values(), oracle]).splitlines()
print("family," + header)
for name, row in zip([*reports, "oracle"], rows):
    print(f"{name},{row}")
