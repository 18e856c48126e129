"""Persist a trained model, load it the way an application would, and dispatch calls."""

import tempfile
from pathlib import Path

from l3tune import ArchitectureProfile, CollectionPlan, ProblemShape, SyntheticBackend, collect, load
from l3tune.core import Precision, Routine
from l3tune.runtime import RuntimeConfig
from l3tune.sampling import SamplerConfig, sample_shapes
from l3tune.training import QUICK_GRIDS, train

routine, precision = Routine.SYRK, Precision.SINGLE
profile = ArchitectureProfile()
backend = SyntheticBackend(profile)
shapes = sample_shapes(routine, precision, 120, SamplerConfig.default(routine, precision, seed=5))
ds = collect(CollectionPlan(routine, precision, shapes, [1, 2, 4, 8, 16, 32], backend))
_, trained = train(ds, ["gbt"], seed=0, folds=3, grids=QUICK_GRIDS)
art = trained["gbt"].artifact

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    model_file = tmp / f"{art.name}.model.json"
    art.save(model_file)
    profile.save(tmp / "profile.json")
    RuntimeConfig(machine_id="demo-box", selected_family="gbt", routines=[art.name],
                  models={art.name: model_file.name}, profile_path="profile.json").save(tmp / "config.json")
    predictor = load(tmp, tmp / "config.json")

for dims in [(64, 64), (64, 64), (3000, 500), (200, 4000)]:
    shape = ProblemShape.of(*dims)
    nt, secs = predictor.dispatch(backend, routine, precision, shape)
    print(f"ssyrk {dims}: nt={nt:>2}  {secs:.3e}s  (model evaluations so far: {predictor.evaluations})")

# The repeated (64, 64) call hit the one-entry memo. Forcing a thread count skips the model.
predictor.force_nt = 4
print(f"forced: {predictor.dispatch(backend, routine, precision, ProblemShape.of(3000, 500))[0]}")
