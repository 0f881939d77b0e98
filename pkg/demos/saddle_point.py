"""Plain, restarted Anderson and sampled ROM on the discrete Stokes-like saddle system."""

import numpy as np

from romaccel import (StepPolicy, VariableStep, anderson_solve, assemble_saddle1,
                      fixed_point_solve, linear_map, sampled_rom_solve)

S = assemble_saddle1(10, seed=0)
x0 = np.zeros(S.A.shape[0])
nb = np.linalg.norm(S.b)
m, rounds = 15, 4

for kind in ("cauchy", "two_direction"):
    runs = {
        "plain": fixed_point_solve(linear_map(S.A, S.b), x0, rounds * m * (m - 1), 0.0,
                                   step=VariableStep(S.A, StepPolicy(kind))),
        "anderson": anderson_solve(linear_map(S.A, S.b), x0, m, rounds * m, 0.0,
                                   step=VariableStep(S.A, StepPolicy(kind))),
        "sampled": sampled_rom_solve(linear_map(S.A, S.b), x0, m, rounds, 0.0,
                                     step=VariableStep(S.A, StepPolicy(kind))),
    }
    for name, (x, tr) in runs.items():
        rel = np.linalg.norm(S.b - S.A @ x) / nb
        print(f"{kind:>14} {name:>9}: relative residual {rel:.3e} after {tr[-1].inner_step} evals")
