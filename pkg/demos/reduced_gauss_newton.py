"""Damped Newton with a Newton-Krylov reduced basis on a Riccati residual."""

import numpy as np

from romaccel import RiccatiProblem, damped_newton_rom, gen_random_spd, riccati_map

F = riccati_map(RiccatiProblem(10, gen_random_spd(10, seed=0), b=0.5))
for m in (1, 3, 6):
    x, tr = damped_newton_rom(F, np.zeros(100), m, tol=1e-10)
    print(f"basis size {m}: {tr.outer} outer steps, |F| = {tr[-1].residual_norm:.2e}, "
          f"{F.nevals} evaluations")
    F.nevals = 0
