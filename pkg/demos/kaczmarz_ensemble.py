"""Sequential block Kaczmarz against the DIIS-weighted parallel ensemble."""

import numpy as np

from romaccel import kaczmarz_parallel, kaczmarz_sequential, partition_overlapping

rng = np.random.default_rng(1)
n = 80
A = rng.standard_normal((n, n)) + 4 * np.eye(n)
b = A @ rng.standard_normal(n)
plan = partition_overlapping(n, 8, overlap=0.2, seed=1)

_, seq = kaczmarz_sequential(A, b, plan, sweeps=5)
print("sequential residual per sweep:",
      " ".join(f"{r.residual_norm:.2e}" for r in seq if r.inner_step % len(plan) == 0))

x = np.zeros(n)
for k in range(5):
    x, tr = kaczmarz_parallel(A, b, plan, x)
    best = min(r.residual_norm for r in tr if r.outer_iteration == 0)
    print(f"parallel round {k + 1}: ensemble {tr[-1].residual_norm:.2e}, best block {best:.2e}")
