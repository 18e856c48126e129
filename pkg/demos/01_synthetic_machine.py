"""A synthetic machine and why the fastest thread count depends on the shape.

The synthetic backend prices a call as compute (shared across threads, with
a hyper-threading discount) plus memory traffic plus a per-thread sync term.
Small problems drown in sync cost and want few threads; big ones want many.
"""

from l3tune import ArchitectureProfile, ProblemShape, oracle_best_nt, synthetic_time
from l3tune.core import Precision, Routine

profile = ArchitectureProfile(noise_sigma=0.0)
print(f"machine: {profile.physical_cores} cores x {profile.ht_level} HT -> max_nt={profile.max_nt}")

for dims in [(32, 32, 32), (256, 256, 256), (2048, 2048, 2048), (4096, 64, 4096)]:
    shape = ProblemShape.of(*dims)
    curve = {nt: synthetic_time(profile, Routine.GEMM, Precision.DOUBLE, shape, nt)
             for nt in (1, 4, 8, 16, 32)}
    best = oracle_best_nt(profile, Routine.GEMM, Precision.DOUBLE, shape, range(1, profile.max_nt + 1))
    row = "  ".join(f"nt={nt}:{t:.2e}s" for nt, t in curve.items())
    print(f"dgemm {dims}: best nt={best}\n    {row}")

# Noise is deterministic per (shape, nt, repetition), so reruns reproduce it.
noisy = profile.with_noise(0.05)
s = ProblemShape.of(512, 512, 512)
a = synthetic_time(noisy, Routine.GEMM, Precision.DOUBLE, s, 8, rep=0)
b = synthetic_time(noisy, Routine.GEMM, Precision.DOUBLE, s, 8, rep=0)
print(f"noisy repeat identical: {a == b}")
