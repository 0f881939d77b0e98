"""Anderson/DIIS acceleration and reduced-order extrapolation for fixed-point
and nonlinear least-squares iterations."""

from .anderson import (IterateHistory, WeightVector, anderson_solve, anderson_update,
                       fixed_point_solve, nested_rom_solve, sampled_rom_solve,
                       solve_diis_weights)
from .continuation import (ContinuationSchedule, SolverSpec, StageOutcome,
                           contraction_probe, continuation_run)
from .errors import (ConfigError, DegenerateSubspace, Diverged, DimensionError,
                     IndefiniteBreakdown, NoDescent, NotSymmetric, RomAccelError,
                     SingularGram, SingularMatrix, ZeroCurvature)
from .kaczmarz import (BlockPlan, block_jacobi_step, kaczmarz_parallel, kaczmarz_sequential,
                       minibatch_gradient_step, nonlinear_block_gn, partition_overlapping)
from .linalg import EigEstimate, extreme_eig, kron, lstsq, mat_vec, solve_dense
from .problems import (ResidualMap, RiccatiProblem, SaddleSystem, assemble_saddle1,
                       assemble_saddle2, build_centered_C, build_tridiag_T, gen_random_spd,
                       linear_map, riccati_map)
from .records import RunRecord, Trace
from .rom import (RomConfig, RomResult, damped_newton_rom, newton_krylov_basis,
                  random_direction_gn, residual_rom_solve, rom_objective, rom_solve,
                  sequential_refine)
from .steps import (SecantOperator, StepPolicy, VariableStep, approx_cauchy_step, bb_step,
                    cauchy_step, conjugate_direction, pcg_run, secant_apply,
                    two_direction_step)

__version__ = "0.1.0"
