from __future__ import annotations

from dataclasses import dataclass


@dataclass
class RunRecord:
    """One row of an iteration trace.

    ``inner_step`` is a cumulative work counter (map evaluations, which equal
    matrix-vector products for linear problems), so traces can be plotted
    against either outer iterations or work.
    """

    outer_iteration: int
    inner_step: int
    residual_norm: float
    relative_residual: float
    step_size: float | None = None
    diff_norm: float | None = None
    param_b: float | None = None


class Trace(list):
    """List of RunRecord with the relative residual computed on append."""

    def __init__(self, initial_residual=None, param_b=None):
        super().__init__()
        self.initial_residual = initial_residual
        self.param_b = param_b

    def add(self, outer, inner, residual, step_size=None, diff=None):
        residual = float(residual)
        if self.initial_residual is None:
            self.initial_residual = residual
        r0 = self.initial_residual
        rel = residual / r0 if r0 > 0 else residual
        rec = RunRecord(outer, inner, residual, rel,
                        None if step_size is None else float(step_size),
                        None if diff is None else float(diff),
                        self.param_b)
        self.append(rec)
        return rec
