"""Continuation in the nonlinearity parameter ``b``.

Stages are solved in increasing ``b``; each stage warm-starts from the
previous solution and the run stops at the first stage that fails.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .anderson import (DEFAULT_EPSILON, anderson_solve, fixed_point_solve,
                       nested_rom_solve, sampled_rom_solve)
from .errors import Diverged, RomAccelError
from .linalg import as_vec

log = logging.getLogger(__name__)

SOLVERS = ("plain", "anderson", "nested", "sampled", "rom_gn")


@dataclass
class ContinuationSchedule:
    """Explicit list of ``b`` values, or a multiplicative growth rule.

    With ``b_values`` empty the stages are ``b_start * factor**k`` for
    ``k < max_stages``. ``budget`` is the per-stage outer-iteration cap.
    """

    b_values: Sequence[float] = ()
    b_start: Optional[float] = None
    factor: float = 1.5
    max_stages: int = 10
    budget: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        self.b_values = [float(b) for b in self.b_values]
        if self.b_values:
            if self.b_values[0] <= 0:
                raise ValueError("b values must be positive")
            if any(b1 <= b0 for b0, b1 in zip(self.b_values, self.b_values[1:])):
                raise ValueError("b values must be strictly increasing")
            if self.b_start is None:
                self.b_start = self.b_values[0]
        else:
            if self.b_start is None or self.b_start <= 0:
                raise ValueError("need b_values or a positive b_start")
            if self.factor <= 1.0:
                raise ValueError("growth factor must exceed 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    @property
    def explicit(self):
        return bool(self.b_values)


@dataclass
class StageOutcome:
    b: float
    converged: bool
    outer_iterations: int
    final_diff: float
    final_residual: float
    inner_steps: int = 0
    status: str = "converged"


class ContinuationLog(list):
    """Stage outcomes in execution order; ``traces`` and ``x`` hold the runs."""

    def __init__(self):
        super().__init__()
        self.traces = []
        self.x = None


@dataclass
class SolverSpec:
    """Which driver runs a stage, and its parameters."""

    method: str = "nested"
    m: int = 4
    epsilon: float = DEFAULT_EPSILON
    batch: int = 3
    levels: int = 2
    step: Optional[Callable] = None

    def __post_init__(self):
        if self.method not in SOLVERS:
            raise ValueError(f"unknown solver {self.method!r}; choose from {SOLVERS}")


def run_stage(F, x0, spec: SolverSpec, budget, tol):
    """Run one solver on one map; return ``(x, trace)``."""
    kw = {} if spec.step is None else {"step": spec.step}
    if spec.method == "plain":
        return fixed_point_solve(F, x0, budget * spec.batch, tol, batch=spec.batch, **kw)
    if spec.method == "anderson":
        return anderson_solve(F, x0, spec.m, budget, tol, spec.epsilon, **kw)
    if spec.method == "nested":
        return nested_rom_solve(F, x0, spec.m, budget, tol, spec.epsilon,
                                levels=spec.levels, **kw)
    if spec.method == "rom_gn":
        from .rom import RomConfig, damped_newton_rom
        return damped_newton_rom(F, x0, spec.m, RomConfig(epsilon=spec.epsilon),
                                 max_outer=budget, tol=tol)
    return sampled_rom_solve(F, x0, spec.m, budget, tol, spec.epsilon, **kw)


def _attempt(family, b, x, spec, schedule):
    F = family(b)
    try:
        x_new, tr = run_stage(F, x, spec, schedule.budget, schedule.tol)
    except (RomAccelError, FloatingPointError) as exc:
        log.info("stage b=%g failed: %s", b, exc)
        return None, StageOutcome(b, False, 0, float("inf"), float("inf"),
                                  F.nevals, "failed"), None
    for rec in tr:
        rec.param_b = b
    last = tr[-1]
    diff = last.diff_norm if last.diff_norm is not None else last.residual_norm
    ok = bool(tr.converged) and diff < schedule.tol
    out = StageOutcome(b, ok, int(tr.outer), float(diff), float(last.residual_norm),
                       F.nevals, "converged" if ok else "failed")
    return x_new, out, tr


def continuation_run(family, schedule: ContinuationSchedule, solver="nested", x0=None,
                     warm_start=True, **solver_kw):
    """Solve a parametrized family over the schedule.

    Parameters
    ----------
    family : callable
        ``b -> ResidualMap``.
    schedule : ContinuationSchedule
    solver : str or SolverSpec
        ``plain``, ``anderson``, ``nested``, ``sampled`` or ``rom_gn``; keyword arguments
        are forwarded to :class:`SolverSpec`.
    x0 : array_like, optional
        Start of the first stage (zeros of the map's input size by default).
    warm_start : bool
        Start each stage from the previous solution rather than from `x0`.

    Returns
    -------
    ContinuationLog
        One :class:`StageOutcome` per scheduled stage. After a failure the
        remaining explicit stages are listed with status ``unattempted``. With
        a growth rule a failure is retried once at the midpoint between the
        last converged ``b`` and the failed one before the run stops.
    """
    spec = solver if isinstance(solver, SolverSpec) else SolverSpec(solver, **solver_kw)
    log_ = ContinuationLog()
    if x0 is None:
        x0 = np.zeros(family(schedule.b_start).dim_in)
    x_start = as_vec(x0).copy()
    x = x_start.copy()

    def record(b, x_cur):
        x_new, out, tr = _attempt(family, b, x_cur if warm_start else x_start, spec, schedule)
        log_.append(out)
        if tr is not None:
            log_.traces.append(tr)
        return x_new, out

    if schedule.explicit:
        for i, b in enumerate(schedule.b_values):
            x_new, out = record(b, x)
            if not out.converged:
                for b_rest in schedule.b_values[i + 1:]:
                    log_.append(StageOutcome(b_rest, False, 0, float("nan"),
                                             float("nan"), 0, "unattempted"))
                break
            x = x_new
    else:
        b_prev, b = None, schedule.b_start
        for _ in range(schedule.max_stages):
            x_new, out = record(b, x)
            if not out.converged:
                if b_prev is None:
                    break
                b = 0.5 * (b_prev + b)
                x_new, out = record(b, x)
                if not out.converged:
                    break
            x, b_prev = x_new, b
            b = b * schedule.factor
    log_.x = x
    return log_


def contraction_probe(F, x, trial_steps=3, tol_growth=1.0):
    """True when plain-iteration increments ``|u_{k+1} - u_k|`` shrink monotonically.

    Each ratio of successive increments must stay below `tol_growth`; an
    increment of zero counts as contractive, an overflow as not.
    """
    if trial_steps < 2:
        raise ValueError("trial_steps must be >= 2")
    x = as_vec(x).copy()
    prev = None
    try:
        for _ in range(trial_steps):
            r = F(x)
            d = float(np.linalg.norm(r))
            if d == 0.0:
                return True
            if prev is not None and not d < tol_growth * prev:
                return False
            prev = d
            x = x + r
    except (Diverged, FloatingPointError):
        return False
    return True
