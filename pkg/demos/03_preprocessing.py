"""What happens to the features before any model sees them."""

import numpy as np

from l3tune import ArchitectureProfile, CollectionPlan, SyntheticBackend, collect
from l3tune.core import Precision, Routine
from l3tune.features import build_features_3d
from l3tune.preprocess import fit_lambda_mle, lof_scores, yeo_johnson
from l3tune.sampling import SamplerConfig, sample_shapes
from l3tune.training import prepare

fv = build_features_3d(1000, 64, 300, 8)
print("features of dgemm 1000x64x300 at nt=8:")
for name, v in zip(fv.names, fv.values):
    print(f"  {name:>20} = {v:.6g}")

# Heavily skewed input: Yeo-Johnson pulls it toward a normal shape.
raw = np.random.default_rng(0).lognormal(3.0, 1.0, 2000)
lam = fit_lambda_mle(raw)
z = yeo_johnson(raw, lam)
skew = lambda a: float(np.mean((a - a.mean()) ** 3) / a.std() ** 3)
print(f"\nlognormal sample: lambda={lam:.3f}, skew {skew(raw):.2f} -> {skew(z):.2f}")

# One planted point far from a tight cluster gets a large local outlier factor.
pts = np.vstack([np.random.default_rng(1).normal(size=(200, 2)), [[8.0, 8.0]]])
print(f"LOF of planted point: {lof_scores(pts, k=20)[-1]:.2f} (cluster median"
      f" {np.median(lof_scores(pts, k=20)[:-1]):.2f})")

routine, precision = Routine.GEMM, Precision.DOUBLE
shapes = sample_shapes(routine, precision, 80, SamplerConfig.default(routine, precision, seed=1))
ds = collect(CollectionPlan(routine, precision, shapes, [1, 2, 4, 8, 16, 32], SyntheticBackend(ArchitectureProfile())))
prep = prepare(ds, seed=0)
ft = prep.transformer
print(f"\nkept after correlation pruning: {list(ft.kept_features)}")
print(f"dropped: {[f for f in ft.input_features if f not in ft.kept_features]}")
print(f"LOF removed {prep.n_outliers} of {len(prep.y_train) + prep.n_outliers} training rows")
