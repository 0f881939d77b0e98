"""Randomized overlapped block methods for linear and mildly nonlinear systems.

A block is a set of row indices ``I_i``. The projection step

    x <- x + A_i^T (A_i A_i^T)^{-1} (b - A x)_{I_i}

makes the block equations hold exactly; the sequential form chains it over
the blocks and the parallel form applies it to a shared snapshot and
combines the candidates with DIIS weights on their full residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anderson import DEFAULT_EPSILON, solve_diis_weights
from .errors import DimensionError, SingularGram, SingularMatrix
from .linalg import as_mat, as_vec, lstsq, solve_dense
from .records import Trace
from .steps import SecantOperator

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class BlockPlan:
    """Overlapping row blocks, visited in list order."""

    row_blocks: list
    overlap: float
    seed: int
    n_rows: int

    @property
    def coverage(self):
        if not self.row_blocks:
            return False
        seen = np.zeros(self.n_rows, dtype=bool)
        for blk in self.row_blocks:
            seen[blk] = True
        return bool(seen.all())

    def __len__(self):
        return len(self.row_blocks)

    def __iter__(self):
        return iter(self.row_blocks)


def partition_overlapping(n_rows, n_blocks, overlap=0.0, seed=0):
    """Random contiguous chunks of a permutation, each padded with borrowed rows.

    Every chunk of size ``s`` receives ``ceil(overlap * s)`` extra rows drawn
    without replacement from the other chunks, so blocks overlap while the
    chunks alone already cover all rows.
    """
    if not 1 <= n_blocks <= n_rows:
        raise ValueError("need 1 <= n_blocks <= n_rows")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_rows)
    chunks = np.array_split(perm, n_blocks)
    blocks = []
    for i, chunk in enumerate(chunks):
        others = np.concatenate([c for j, c in enumerate(chunks) if j != i]) \
            if n_blocks > 1 else np.empty(0, dtype=int)
        extra = min(math.ceil(overlap * chunk.size), others.size)
        borrowed = rng.choice(others, size=extra, replace=False) if extra else others[:0]
        blocks.append(np.concatenate([chunk, borrowed]).astype(int))
    return BlockPlan(blocks, float(overlap), seed, n_rows)


def _check(A, b, x):
    A = as_mat(A)
    b = as_vec(b)
    if A.shape[0] != b.size:
        raise DimensionError(f"rhs length {b.size} does not match {A.shape[0]} rows")
    x = np.zeros(A.shape[1]) if x is None else as_vec(x).copy()
    if x.size != A.shape[1]:
        raise DimensionError(f"iterate length {x.size} does not match {A.shape[1]} columns")
    return A, b, x


def _block_solve(G, rhs, ridge, block=None):
    G = G.copy()
    if ridge:
        G[np.diag_indices_from(G)] += ridge
    try:
        return solve_dense(G, rhs)
    except SingularMatrix:
        pass
    bump = 1e-12 * float(np.trace(G))
    if not bump > 0:
        raise SingularGram(f"block {block} has a zero Gram matrix")
    G[np.diag_indices_from(G)] += bump
    try:
        return solve_dense(G, rhs)
    except SingularMatrix as exc:
        raise SingularGram(f"block {block} Gram matrix singular (pivot {exc.pivot:.2e})") from None


def block_project(A, b, rows, x, ridge=0.0, block=None):
    """One block projection ``x + A_I^T (A_I A_I^T)^{-1} (b - A x)_I``."""
    Ai = A[rows]
    y = _block_solve(Ai @ Ai.T, b[rows] - Ai @ x, ridge, block)
    return x + Ai.T @ y


def projection_matrix(Ai, ridge=0.0):
    """``P = A_i^T (A_i A_i^T)^{-1} A_i``, the orthogonal projector onto the row space."""
    Ai = as_mat(Ai)
    G = Ai @ Ai.T
    cols = [_block_solve(G, Ai[:, j], ridge) for j in range(Ai.shape[1])]
    return Ai.T @ np.column_stack(cols)


def kaczmarz_sequential(A, b, plan: BlockPlan, x0=None, sweeps=1, ridge=0.0,
                        reshuffle=False):
    """Sequential block Kaczmarz.

    Each block visit projects the current iterate. The trace gets one row per
    visit with ``outer`` the sweep index; ``reshuffle`` permutes the block
    order every sweep with a generator seeded from the plan.
    """
    A, b, x = _check(A, b, x0)
    tr = Trace()
    tr.add(0, 0, np.linalg.norm(b - A @ x))
    order = np.arange(len(plan))
    rng = np.random.default_rng(plan.seed)
    visits = 0
    for sweep in range(1, sweeps + 1):
        if reshuffle:
            order = rng.permutation(len(plan))
        for i in order:
            x = block_project(A, b, plan.row_blocks[i], x, ridge, block=int(i))
            visits += 1
            tr.add(sweep, visits, np.linalg.norm(b - A @ x))
    return x, tr


def kaczmarz_parallel(A, b, plan: BlockPlan, x_c=None, ridge=0.0,
                      epsilon=DEFAULT_EPSILON, row_mask=None):
    """Project the snapshot ``x_c`` on every block and combine the candidates.

    The weights minimize the combined full residual ``|sum a_i (b - A x_i)|``
    subject to ``sum a_i = 1``; ``row_mask`` restricts the Gram matrix to a
    subset of residual rows. The trace has one row per candidate
    (``outer = 0``) and a final row for the ensemble (``outer = 1``);
    ``trace.weights`` holds the weights.
    """
    A, b, x_c = _check(A, b, x_c)
    tr = Trace()
    tr.add(0, 0, np.linalg.norm(b - A @ x_c))
    xs, rs = [], []
    for i, rows in enumerate(plan.row_blocks):
        xi = block_project(A, b, rows, x_c, ridge, block=i)
        ri = b - A @ xi
        xs.append(xi)
        rs.append(ri)
        tr.add(0, i + 1, np.linalg.norm(ri))
    w = solve_diis_weights(rs, epsilon, rows=row_mask)
    x = w.combine(xs)
    tr.add(1, len(xs), np.linalg.norm(b - A @ x))
    tr.weights = w.weights
    return x, tr


def block_jacobi_step(A, b, plan: BlockPlan, x):
    """Overlapped block Jacobi from the snapshot ``x``.

    Block ``I`` proposes ``x_I + A_II^{-1} (b - A x)_I`` for its own
    coordinates; coordinates covered by several blocks take the mean of the
    proposals.
    """
    A, b, x = _check(A, b, x)
    if A.shape[0] != A.shape[1]:
        raise DimensionError("block Jacobi needs a square matrix")
    r = b - A @ x
    acc = np.zeros_like(x)
    hits = np.zeros(x.size)
    for i, rows in enumerate(plan.row_blocks):
        try:
            dx = solve_dense(A[np.ix_(rows, rows)], r[rows])
        except SingularMatrix as exc:
            raise SingularMatrix(f"diagonal block {i} is singular", pivot=exc.pivot,
                                 block=i) from None
        np.add.at(acc, rows, dx)
        np.add.at(hits, rows, 1.0)
    out = x.copy()
    touched = hits > 0
    out[touched] += acc[touched] / hits[touched]
    return out


def golden_section(f, lo, hi, evals=20):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` with a fixed number of evaluations."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(evals - 2):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def minibatch_gradient_step(loss_grads, batch, x, weight_mode="uniform_beta",
                            losses=None, interval=(0.0, 2.0), epsilon=DEFAULT_EPSILON,
                            return_weights=False):
    """One mini-batch step ``x - sum_k beta_k g_k(x)`` over the indices in `batch`.

    Parameters
    ----------
    loss_grads : sequence of callables
        Gradient functions ``g_k``.
    batch : sequence of int
    x : array_like
    weight_mode : {"uniform_beta", "diis_beta"}
        ``uniform_beta`` uses one common ``beta`` chosen by a 20-evaluation
        golden-section search on `interval`; ``diis_beta`` takes the affine
        weights minimizing ``|sum beta_k g_k|``.
    losses : sequence of callables, optional
        Loss values for the line search. Without them the search minimizes
        the squared norm of the batch gradient at the trial point.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be non-empty")
    x = as_vec(x)
    grads = [as_vec(loss_grads[k](x)) for k in batch]
    if all(not np.any(g) for g in grads):
        return (x.copy(), np.zeros(len(batch))) if return_weights else x.copy()
    if weight_mode == "diis_beta":
        beta = solve_diis_weights(grads, epsilon).weights
        step = sum(bk * g for bk, g in zip(beta, grads))
        x_new = x - step
    elif weight_mode == "uniform_beta":
        g = np.sum(grads, axis=0)
        if losses is not None:
            def merit(t):
                return sum(losses[k](x - t * g) for k in batch)
        else:
            def merit(t):
                return float(np.sum(np.square(
                    np.sum([loss_grads[k](x - t * g) for k in batch], axis=0))))
        t = golden_section(merit, *interval)
        beta = np.full(len(batch), t)
        x_new = x - t * g
    else:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    return (x_new, beta) if return_weights else x_new


def nonlinear_block_gn(F, plan: BlockPlan, x0, directions, ridge=1e-12, t=None,
                       ensemble=True):
    """Block-restricted reduced Gauss-Newton over a fixed direction set.

    For each block ``I`` (over residual components) the increment
    ``D beta`` minimizes ``|J_I D beta + F_I(x_c)|^2 + ridge |x_c + D beta|^2``
    with secant columns ``J d_j``; blocks are chained ``x_l = x_{l-1} + D beta``.
    With `ensemble`, the block solutions are finally combined by
    :func:`~romaccel.rom.rom_solve` and the better of the ensemble and the
    last chained iterate is returned.
    """
    from .rom import RomConfig, rom_solve

    directions = [as_vec(d) for d in directions]
    if not directions:
        raise ValueError("directions must be non-empty")
    D = np.column_stack(directions)
    x = as_vec(x0).copy()
    fx = F(x)
    tr = Trace()
    tr.add(0, F.nevals, np.linalg.norm(fx))
    if not np.any(fx):
        tr.converged = True
        return x, tr
    sols, res = [], []
    sr = np.sqrt(ridge)
    for ell, rows in enumerate(plan.row_blocks, start=1):
        if np.any(fx[rows]):
            sec = SecantOperator(x, F, t, fx=fx)
            J = np.column_stack([sec(d)[rows] if np.any(d) else np.zeros(len(rows))
                                 for d in directions])
            M = np.vstack([J, sr * D]) if ridge else J
            rhs = np.concatenate([-fx[rows], -sr * x]) if ridge else -fx[rows]
            try:
                beta = lstsq(M, rhs)
            except SingularMatrix:
                beta = lstsq(M, rhs, ridge=max(1e-12 * float(np.sum(M * M)), 1e-300))
            x = x + D @ beta
            fx = F(x)
        sols.append(x.copy())
        res.append(fx.copy())
        tr.add(ell, F.nevals, np.linalg.norm(fx))
    if ensemble and len(sols) > 1:
        try:
            out = rom_solve(F, sols, RomConfig(ridge=ridge), residuals=res, prune=True)
        except SingularGram:
            out = None
        if out is not None and out.merit_after < float(fx @ fx):
            x, fx = out.x_out, out.residual
        tr.add(len(sols) + 1, F.nevals, np.linalg.norm(fx))
    tr.converged = False
    return x, tr
