"""Sample shapes with a scrambled Halton sequence, time them, split by shape.

Collection writes a CSV as it goes; killing it and rerunning with resume=True
picks up after the last complete shape.
"""

import tempfile
from pathlib import Path

from l3tune import ArchitectureProfile, CollectionPlan, SyntheticBackend, collect, optimal_nt_labels, split
from l3tune.core import Precision, Routine, memory_footprint_bytes
from l3tune.harness import read_csv
from l3tune.sampling import SamplerConfig, sample_shapes

routine, precision = Routine.GEMM, Precision.DOUBLE
cfg = SamplerConfig.default(routine, precision, seed=7)
shapes = sample_shapes(routine, precision, 60, cfg)
print(f"first shapes: {[s.dims for s in shapes[:4]]}")
print(f"largest footprint: {max(memory_footprint_bytes(routine, precision, s) for s in shapes) / 2**20:.1f} MiB"
      f" (cap {cfg.cap_bytes / 2**20:.0f} MiB)")

backend = SyntheticBackend(ArchitectureProfile())
plan = CollectionPlan(routine, precision, shapes, [1, 2, 4, 8, 16, 24, 32], backend)

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "dgemm.csv"
    # Simulate an interrupted run: collect the first 20 shapes, then resume with all 60.
    collect(CollectionPlan(routine, precision, shapes[:20], plan.nt_candidates, backend), out)
    print(f"partial file rows: {len(read_csv(out))}")
    ds = collect(plan, out, resume=True)
    print(f"after resume: {len(ds)} rows = {len(shapes)} shapes x {len(plan.nt_candidates)} nt")

labels = optimal_nt_labels(ds)
hist = {}
for nt in labels.values():
    hist[nt] = hist.get(nt, 0) + 1
print(f"measured optimal nt histogram: {dict(sorted(hist.items()))}")

train, test = split(ds, test_fraction=0.2, seed=0)
print(f"split: {len(train.shapes())} train shapes, {len(test.shapes())} test shapes,"
      f" no overlap: {not set(train.shapes()) & set(test.shapes())}")
