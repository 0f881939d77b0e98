"""Command-line harness for the Riccati and saddle-point experiments.

Examples
--------
::

    romaccel --experiment riccati --method nested --depth 7 --b 1 --b 2 --b 5
    romaccel --experiment saddle1 --method sampled --depth 15 --out trace.csv
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .anderson import anderson_solve, fixed_point_solve, nested_rom_solve, sampled_rom_solve
from .continuation import ContinuationSchedule, SolverSpec, continuation_run
from .errors import ConfigError, RomAccelError
from .kaczmarz import kaczmarz_parallel, kaczmarz_sequential, partition_overlapping
from .problems import (assemble_saddle1, assemble_saddle2, gen_random_spd, linear_map,
                       riccati_family)
from .records import Trace
from .rom import RomConfig, damped_newton_rom
from .steps import StepPolicy, VariableStep, pcg_run

log = logging.getLogger(__name__)

EXPERIMENTS = ("riccati", "saddle1", "saddle2", "linear_file")
METHODS = ("plain", "anderson", "nested", "sampled", "rom_gn", "cg",
           "kaczmarz_seq", "kaczmarz_par")
STEP_KINDS = ("cauchy", "approx_cauchy", "two_direction", "approx_two_direction",
              "bb1", "bb2", "fixed")
CSV_HEADER = ("outer", "inner", "residual", "relative_residual", "step_size", "diff", "b")
SEED_ENV = "ROM_ACCEL_SEED"


@dataclass
class ExperimentConfig:
    experiment: str = "riccati"
    method: str = "nested"
    n: int = 10
    depth: Optional[int] = None
    tol: float = 1e-6
    max_outer: int = 100
    epsilon: Optional[float] = None
    seed: int = 0
    b_schedule: list = field(default_factory=list)
    step_policy: Optional[str] = None
    directions: str = "one"
    output_path: Optional[str] = None
    input_path: Optional[str] = None
    blocks: int = 8
    overlap: float = 0.2

    @property
    def m(self):
        if self.depth is not None:
            return self.depth
        return 4 if self.experiment == "riccati" else 15

    @property
    def eps(self):
        if self.epsilon is not None:
            return self.epsilon
        return 1e-22 if self.experiment == "saddle2" else 1e-30

    def step_kind(self):
        if self.step_policy is not None:
            return self.step_policy
        kind = "cauchy" if self.directions == "one" else "two_direction"
        return "approx_" + kind if self.experiment == "saddle2" else kind

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.experiment not in EXPERIMENTS:
            bad(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.method not in METHODS:
            bad(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.directions not in ("one", "two"):
            bad("directions must be 'one' or 'two'")
        if self.step_policy is not None and self.step_policy not in STEP_KINDS:
            bad(f"unknown step policy {self.step_policy!r}; choose from {', '.join(STEP_KINDS)}")
        if self.n < (1 if self.experiment == "riccati" else 2):
            bad("n is too small for this experiment")
        if self.m < 1:
            bad("depth must be >= 1")
        if self.method in ("nested", "sampled") and self.m < 2:
            bad(f"{self.method} needs depth >= 2")
        if not self.tol > 0:
            bad("tol must be positive")
        if self.max_outer < 1:
            bad("max-outer must be >= 1")
        if self.eps < 0:
            bad("epsilon must be non-negative")
        if not 1 <= self.blocks:
            bad("blocks must be >= 1")
        if not 0.0 <= self.overlap < 1.0:
            bad("overlap must lie in [0, 1)")
        if self.experiment == "riccati":
            if self.method in ("cg", "kaczmarz_seq", "kaczmarz_par"):
                bad(f"method {self.method} applies to linear experiments only")
            if self.step_policy is not None or self.directions != "one":
                bad("step policies and directions apply to linear experiments only")
            bs = self.b_schedule or [0.05]
            if bs[0] <= 0 or any(b1 <= b0 for b0, b1 in zip(bs, bs[1:])):
                bad("b values must be positive and strictly increasing")
        else:
            if self.b_schedule:
                bad("--b applies to the riccati experiment only")
            kind = self.step_kind()
            if kind.startswith("approx") and self.experiment != "saddle2":
                bad(f"step policy {kind} needs a surrogate matrix; only saddle2 provides one")
            if self.step_policy is not None and self.directions == "two" \
                    and "two_direction" not in kind:
                bad(f"directions=two conflicts with step policy {kind}")
        if self.experiment == "linear_file" and not self.input_path:
            bad("linear_file needs --input")
        return self


def read_linear_file(path):
    """Parse ``rows cols``, row-major entries, then ``rhs`` and its entries."""
    try:
        with open(path, encoding="utf-8") as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        k = 2 + rows * cols
        A = np.array([float(t) for t in tokens[2:k]]).reshape(rows, cols)
        if tokens[k] != "rhs":
            raise ValueError(f"expected 'rhs', found {tokens[k]!r}")
        b = np.array([float(t) for t in tokens[k + 1:]])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed linear file {path}: {exc}") from None
    if b.size != rows:
        raise ConfigError(f"rhs has {b.size} entries, expected {rows}")
    return A, b


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def emit_csv(records, path, allow_empty=False):
    """Write records with the fixed header; reals use 17 significant digits."""
    records = list(records)
    if not records and not allow_empty:
        raise ValueError("no records to write")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([_fmt(r.outer_iteration), _fmt(r.inner_step), _fmt(r.residual_norm),
                        _fmt(r.relative_residual), _fmt(r.step_size), _fmt(r.diff_norm),
                        _fmt(r.param_b)])


def table_report(outcomes):
    """Fixed-width ``b / iterate / |u_{k+1} - u_k|`` table."""
    lines = [f"{'b':>10}  {'iterate':>8}  {'|u_{k+1}-u_k|':>14}"]
    for o in outcomes:
        if o.converged:
            diff = f"{o.final_diff:.3e}"
        elif o.status == "unattempted":
            diff = "not run"
        else:
            diff = "diverged"
        it = str(o.outer_iterations) if o.status != "unattempted" else "-"
        lines.append(f"{o.b:>10g}  {it:>8}  {diff:>14}")
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentResult:
    status: int
    records: list
    final_residual: float
    relative_residual: float
    iterations: int
    converged: bool
    table: str = ""


def _run_riccati(cfg):
    Q = gen_random_spd(cfg.n, cfg.seed)
    fam = riccati_family(cfg.n, Q)
    sched = ContinuationSchedule(cfg.b_schedule or [0.05], budget=cfg.max_outer, tol=cfg.tol)
    out = continuation_run(fam, sched, SolverSpec(cfg.method, m=cfg.m, epsilon=cfg.eps))
    records = [r for tr in out.traces for r in tr]
    ok = all(o.converged for o in out)
    tried = [o for o in out if o.status != "unattempted"]
    res = tried[-1].final_residual
    rel = records[-1].relative_residual if ok else float("nan")
    iters = sum(o.outer_iterations for o in out)
    return ExperimentResult(0 if ok else 2, records, res, rel, iters, ok, table_report(out))


def _linear_system(cfg):
    if cfg.experiment == "saddle1":
        S = assemble_saddle1(cfg.n, cfg.seed)
        return S.A, S.b, None
    if cfg.experiment == "saddle2":
        S = assemble_saddle2(cfg.n, cfg.seed)
        return S.A, S.b, S.Abar
    A, b = read_linear_file(cfg.input_path)
    return A, b, None


def _run_linear(cfg):
    A, b, Abar = _linear_system(cfg)
    F = linear_map(A, b)
    x0 = np.zeros(A.shape[1])
    nb = float(np.linalg.norm(b))
    tol_abs = cfg.tol * nb
    kind = cfg.step_kind()
    m, meth = cfg.m, cfg.method
    step = VariableStep(A, StepPolicy(kind, surrogate=Abar if kind.startswith("approx") else None))
    if meth == "plain":
        x, tr = fixed_point_solve(F, x0, cfg.max_outer * max(m - 1, 1), tol_abs, step=step)
    elif meth == "anderson":
        x, tr = anderson_solve(F, x0, m, cfg.max_outer, tol_abs, cfg.eps, step=step)
    elif meth == "sampled":
        x, tr = sampled_rom_solve(F, x0, m, math.ceil(cfg.max_outer / m), tol_abs,
                                  cfg.eps, step=step)
    elif meth == "nested":
        x, tr = nested_rom_solve(F, x0, m, cfg.max_outer, tol_abs, cfg.eps, step=step)
    elif meth == "rom_gn":
        x, tr = damped_newton_rom(F, x0, m, RomConfig(epsilon=cfg.eps), cfg.max_outer, tol_abs)
    elif meth == "cg":
        x, tr = pcg_run(A, b, None, x0, cfg.tol, cfg.max_outer, spd=False)
    elif meth == "kaczmarz_seq":
        plan = partition_overlapping(A.shape[0], min(cfg.blocks, A.shape[0]), cfg.overlap, cfg.seed)
        x, tr = kaczmarz_sequential(A, b, plan, x0, cfg.max_outer, ridge=0.0)
    else:
        plan = partition_overlapping(A.shape[0], min(cfg.blocks, A.shape[0]), cfg.overlap, cfg.seed)
        tr = Trace()
        x = x0
        tr.add(0, 0, nb)
        for k in range(1, cfg.max_outer + 1):
            x, sub = kaczmarz_parallel(A, b, plan, x, epsilon=cfg.eps)
            tr.add(k, k * len(plan), sub[-1].residual_norm)
            if sub[-1].residual_norm < tol_abs:
                break
    res = float(np.linalg.norm(b - A @ x))
    rel = res / nb if nb > 0 else res
    ok = rel <= cfg.tol
    iters = tr[-1].outer_iteration
    return ExperimentResult(0 if ok else 2, list(tr), res, rel, iters, ok)


def run_experiment(cfg: ExperimentConfig, stdout=None, stderr=None):
    """Run one configured experiment; return ``(exit_status, result or None)``.

    Status 0 means converged (relative residual, or every continuation stage,
    within ``tol``), 2 means the budget ran out or a stage failed, 1 means a
    configuration or runtime error (reported on `stderr`).
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    t0 = time.perf_counter()
    try:
        cfg.validate()
        if cfg.experiment == "riccati":
            result = _run_riccati(cfg)
        else:
            result = _run_linear(cfg)
    except (RomAccelError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1, None
    if cfg.output_path:
        try:
            emit_csv(result.records, cfg.output_path, allow_empty=True)
        except OSError as exc:
            print(f"error: cannot write {cfg.output_path}: {exc}", file=stderr)
            return 1, None
    wall = time.perf_counter() - t0
    if result.table:
        stdout.write(result.table)
    state = "converged" if result.converged else "not converged"
    print(f"{cfg.experiment}/{cfg.method}: {state}, final residual {result.final_residual:.4e}"
          f" (relative {result.relative_residual:.4e}), iterations {result.iterations},"
          f" wall time {wall:.3f} s", file=stdout)
    return result.status, result


_FILE_KEYS = {f.name for f in fields(ExperimentConfig)} | {"b", "out", "input", "max-outer",
                                                           "step-policy"}
_ALIASES = {"b": "b_schedule", "out": "output_path", "input": "input_path",
            "max-outer": "max_outer", "step-policy": "step_policy"}


def _parse_floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _coerce(name, value):
    if name == "b_schedule":
        return _parse_floats(value) if isinstance(value, str) else [float(v) for v in value]
    if name in ("n", "depth", "max_outer", "seed", "blocks"):
        return int(value)
    if name in ("tol", "epsilon", "overlap"):
        return float(value)
    return value


def read_config_file(path):
    """``key=value`` lines; ``#`` starts a comment. Keys match the long flags."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FILE_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        name = _ALIASES.get(key, key).replace("-", "_")
        try:
            out[name] = _coerce(name, value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="romaccel",
                                description="Anderson / reduced-order acceleration experiments")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--n", type=int, help="problem size (Riccati n, or grid n for saddles)")
    p.add_argument("--depth", type=int, help="window depth m")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-outer", dest="max_outer", type=int)
    p.add_argument("--epsilon", type=float, help="DIIS regularization")
    p.add_argument("--seed", type=int)
    p.add_argument("--b", dest="b_schedule", type=float, action="append",
                   help="Riccati parameter; repeat for a continuation schedule")
    p.add_argument("--directions", choices=("one", "two"))
    p.add_argument("--step-policy", dest="step_policy", choices=STEP_KINDS)
    p.add_argument("--blocks", type=int, help="Kaczmarz block count")
    p.add_argument("--overlap", type=float, help="Kaczmarz block overlap fraction")
    p.add_argument("--input", dest="input_path", help="matrix file for linear_file")
    p.add_argument("--out", dest="output_path", help="CSV trace path")
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(ns):
    values = {}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if ns.config:
        values.update(read_config_file(ns.config))
    for f in fields(ExperimentConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentConfig(**values)


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status, _ = run_experiment(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
