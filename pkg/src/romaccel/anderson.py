"""DIIS weights and Anderson-type acceleration drivers.

Every driver works on a :class:`~romaccel.problems.ResidualMap` ``F`` and an
iterate generator ``step(x, r) -> x_next`` (default: the fixed-point step
``x + r``). A *k-step window* starts at ``x_1`` and produces ``x_2 .. x_k``
with the generator; the window is then replaced by the residual-minimizing
affine combination ``sum c_i x_i`` (gated on the true residual) and the next
window restarts from it.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import Diverged, SingularGram, SingularMatrix
from .linalg import as_vec, solve_dense
from .records import Trace

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-30
DIVERGENCE_FACTOR = 1e12


@dataclass
class WeightVector:
    weights: np.ndarray
    mode: str = "affine"
    multiplier: float = 0.0

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def combine(self, vectors):
        return sum(c * np.asarray(v) for c, v in zip(self.weights, vectors))


class IterateHistory:
    """Sliding window of ``(x_k, r_k)`` pairs, at most ``depth`` long."""

    def __init__(self, depth):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.xs = deque(maxlen=depth)
        self.rs = deque(maxlen=depth)

    def __len__(self):
        return len(self.xs)

    def push(self, x, r):
        self.xs.append(as_vec(x).copy())
        self.rs.append(as_vec(r).copy())

    def clear(self):
        self.xs.clear()
        self.rs.clear()

    def best(self):
        """Index of the stored pair with the smallest residual norm."""
        norms = [np.linalg.norm(r) for r in self.rs]
        return int(np.argmin(norms))


def gram(rs, rows=None):
    R = np.column_stack([as_vec(r) for r in rs])
    if rows is not None:
        R = R[rows]
    return R.T @ R


def simplex_qp(H, g=None, tol=1e-13, max_iter=200):
    """Minimize ``1/2 a^T H a + g^T a`` over the probability simplex.

    Primal active-set method started at the best vertex; exact for positive
    semidefinite ``H`` up to the tolerance on the multipliers.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[0]
    g = np.zeros(m) if g is None else np.asarray(g, dtype=float)
    scale = max(np.max(np.abs(np.diag(H))), np.max(np.abs(g), initial=0.0), 1e-300)
    Hs, gs = H / scale, g / scale
    j = int(np.argmin(0.5 * np.diag(Hs) + gs))
    x = np.zeros(m)
    x[j] = 1.0
    free = {j}
    for _ in range(max_iter):
        F = sorted(free)
        k = len(F)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = Hs[np.ix_(F, F)]
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([-gs[F], [1.0]])
        try:
            sol = solve_dense(K, rhs)
        except SingularMatrix:
            K[np.arange(k), np.arange(k)] += 1e-12
            sol = solve_dense(K, rhs)
        y = np.zeros(m)
        y[F] = sol[:k]
        if np.all(sol[:k] >= -tol):
            x = np.clip(y, 0.0, None)
            x /= x.sum()
            grad = Hs @ x + gs
            lam = -float(np.mean(grad[F]))
            fixed = [i for i in range(m) if i not in free]
            if not fixed:
                return x
            mu = grad[fixed] + lam
            i = int(np.argmin(mu))
            if mu[i] >= -tol:
                return x
            free.add(fixed[i])
        else:
            d = y - x
            t = 1.0
            block = None
            for i in F:
                if d[i] < 0:
                    ti = x[i] / -d[i]
                    if ti < t:
                        t, block = ti, i
            x = x + t * d
            for i in F:
                if x[i] <= tol and len(free) > 1:
                    free.discard(i)
                    x[i] = 0.0
            if block is not None and block in free and len(free) > 1:
                free.discard(block)
                x[block] = 0.0
            x = np.clip(x, 0.0, None)
            x /= x.sum()
    log.warning("simplex_qp hit the iteration limit")
    return x


def _bordered_solve(B, eps):
    m = B.shape[0]
    s = float(np.trace(B)) / m
    if not s > 0:
        return np.full(m, 1.0 / m), 0.0
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = B / s
    K[np.arange(m), np.arange(m)] += eps / s
    K[:m, m] = 1.0
    K[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    sol = solve_dense(K, rhs)
    return sol[:m], sol[m] * s


def solve_diis_weights(rs, epsilon=0.0, mode="affine", rows=None):
    """Weights minimizing ``|sum c_i r_i|^2 + epsilon |c|^2``.

    Parameters
    ----------
    rs : sequence of vectors
        Residuals ``r_1 .. r_m``.
    epsilon : float
        Regularization added to the Gram diagonal.
    mode : {"affine", "convex", "unconstrained"}
        ``affine`` enforces ``sum c = 1`` through the bordered system
        ``[[B + eps I, 1], [1^T, 0]] (c, lam) = (0, 1)``; ``convex`` also
        requires ``c >= 0``. ``unconstrained`` returns the zero vector's
        minimizer only for regularized problems and is mainly for tests.
    rows : index array, optional
        Restrict the Gram matrix to these residual components.
    """
    rs = list(rs)
    if not rs:
        raise ValueError("need at least one residual")
    m = len(rs)
    if len({np.size(r) for r in rs}) != 1:
        raise ValueError("residuals must have equal length")
    if m == 1:
        return WeightVector(np.ones(1), mode, -float(np.dot(rs[0], rs[0])))
    B = gram(rs, rows)
    if mode == "unconstrained":
        return WeightVector(np.zeros(m), mode, 0.0)
    try:
        c, lam = _bordered_solve(B, epsilon)
    except SingularMatrix:
        eps2 = max(1e-30, 1e-12 * float(np.trace(B)) / m)
        if eps2 <= epsilon:
            raise SingularGram("Gram system singular") from None
        try:
            c, lam = _bordered_solve(B, eps2)
        except SingularMatrix as exc:
            raise SingularGram(f"Gram system singular (pivot {exc.pivot:.2e})") from None
        epsilon = eps2
    if mode == "convex" and np.any(c < -1e-12):
        H = B + epsilon * np.eye(m)
        c = simplex_qp(H)
        lam = -float(c @ H @ c)
    return WeightVector(c, mode, float(lam))


def anderson_update(h: IterateHistory, epsilon=DEFAULT_EPSILON, mode="affine"):
    if len(h) == 0:
        raise ValueError("history is empty")
    w = solve_diis_weights(h.rs, epsilon, mode)
    return w.combine(h.xs)


def fixed_point_step(x, r):
    return x + r


def _window(F, x, r, k, epsilon, step, gate=True, mode="affine", refine=True):
    """Run one k-step window from ``(x, r)``; return ``(x_new, r_new, accepted)``."""
    if k == 1:
        x_new = step(x, r)
        return x_new, F(x_new), True
    h = IterateHistory(k)
    h.push(x, r)
    for _ in range(k - 1):
        x = step(x, r)
        r = F(x)
        h.push(x, r)
    x_new = anderson_update(h, epsilon, mode)
    r_new = F(x_new)
    if not gate:
        return x_new, r_new, True
    j = h.best()
    if np.linalg.norm(r_new) <= np.linalg.norm(h.rs[j]):
        return x_new, r_new, True
    if refine:
        res = _rom_refine(F, list(h.xs), list(h.rs), epsilon)
        if res is not None and res.merit_after < float(h.rs[j] @ h.rs[j]):
            return res.x_out, res.residual, True
    return h.xs[j].copy(), h.rs[j].copy(), False


def _rom_refine(F, xs, rs, epsilon):
    # the Anderson point is not a descent point: minimize the true merit over the window
    from .rom import RomConfig, rom_solve
    try:
        return rom_solve(F, xs, RomConfig(epsilon=epsilon), residuals=rs, prune=False)
    except (SingularGram, Diverged):
        return None


def _combine_gated(F, xs, rs, epsilon, mode="affine"):
    w = solve_diis_weights(rs, epsilon, mode)
    z = w.combine(xs)
    rz = F(z)
    norms = [np.linalg.norm(r) for r in rs]
    j = int(np.argmin(norms))
    if np.linalg.norm(rz) <= norms[j]:
        return z, rz, True
    res = _rom_refine(F, xs, rs, epsilon)
    if res is not None and res.merit_after < norms[j] ** 2:
        return res.x_out, res.residual, True
    return np.array(xs[j], copy=True), np.array(rs[j], copy=True), False


def _check_growth(rn, r0):
    if r0 > 0 and rn > DIVERGENCE_FACTOR * r0:
        raise Diverged(f"residual grew from {r0:.3e} to {rn:.3e}")


def fixed_point_solve(F, x0, max_steps, tol, step=fixed_point_step, batch=1):
    """Plain iterate ``x <- step(x, F(x))`` until ``|x_{k+1} - x_k| < tol``.

    ``batch`` groups sweeps into outer iterations for reporting (the trace
    keeps one row per sweep; ``trace.outer`` is the batch count).
    """
    x = as_vec(x0).copy()
    r = F(x)
    tr = Trace()
    r0 = np.linalg.norm(r)
    tr.add(0, F.nevals, r0)
    tr.converged, tr.sweeps = False, 0
    for k in range(1, max_steps + 1):
        x_new = step(x, r)
        diff = np.linalg.norm(x_new - x)
        x = x_new
        r = F(x)
        rn = np.linalg.norm(r)
        tr.add(-(-k // batch), F.nevals, rn, diff=diff)
        tr.sweeps = k
        if diff < tol:
            tr.converged = True
            break
        _check_growth(rn, r0)
    tr.outer = -(-tr.sweeps // batch)
    return x, tr


def anderson_solve(F, x0, m, max_outer, tol, epsilon=DEFAULT_EPSILON,
                   step=fixed_point_step, gate=True, mode="affine"):
    """Restarted m-step Anderson acceleration.

    Each outer iteration runs one m-step window and restarts from the
    (gated) combination. Convergence is declared when the fixed-point
    increment ``|F(x)|`` at the restart point drops below `tol`.

    Returns
    -------
    x : ndarray
    trace : Trace
        One row per outer iteration; ``trace.converged`` and ``trace.outer``
        summarize the run.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    x = as_vec(x0).copy()
    r = F(x)
    r0 = np.linalg.norm(r)
    tr = Trace()
    tr.add(0, F.nevals, r0, diff=r0)
    tr.converged, tr.outer = r0 < tol, 0
    stalls = 0
    for outer in range(1, max_outer + 1):
        if tr.converged:
            break
        x_prev = x
        x, r, accepted = _window(F, x, r, m, epsilon, step, gate, mode)
        rn = np.linalg.norm(r)
        tr.add(outer, F.nevals, rn, diff=rn)
        tr.outer = outer
        if rn < tol:
            tr.converged = True
            break
        _check_growth(rn, r0)
        stalls = stalls + 1 if np.array_equal(x, x_prev) else 0
        if stalls >= 2:
            log.info("anderson_solve stalled at outer %d", outer)
            break
    return x, tr


def nested_rom_solve(F, x0, m, budget, tol, epsilon=DEFAULT_EPSILON,
                     step=fixed_point_step, levels=2):
    """Nested ROM: accelerate the Anderson map itself.

    One cycle builds ``y_0 = x`` and, for ``k = 2..m``, ``y_{k-1}`` as the
    k-step window started at ``y_{k-2}``; the ``y`` are then combined by DIIS
    into ``z`` and the next cycle starts from ``z``. With ``levels >= 3`` the
    last ``m`` cycle outputs are combined once more.

    `budget` caps the number of cycles. The trace has one row per level-1
    window (``outer`` counts windows, ``trace.cycles`` counts cycles) and the
    run stops at the first window or combination with ``|F| < tol``.
    """
    if m < 2:
        raise ValueError("nested ROM needs m >= 2")
    x = as_vec(x0).copy()
    r = F(x)
    r0 = np.linalg.norm(r)
    tr = Trace()
    tr.add(0, F.nevals, r0, diff=r0)
    tr.converged, tr.outer, tr.cycles = r0 < tol, 0, 0
    zx, zr = deque(maxlen=m), deque(maxlen=m)
    stalls = 0
    count = 0
    for cycle in range(1, budget + 1):
        if tr.converged:
            break
        tr.cycles = cycle
        x_prev = x
        ys, rys = [x], [r]
        y, ry = x, r
        for k in range(2, m + 1):
            y, ry, _ = _window(F, y, ry, k, epsilon, step)
            ys.append(y)
            rys.append(ry)
            count += 1
            rn = np.linalg.norm(ry)
            tr.add(count, F.nevals, rn, diff=rn)
            _check_growth(rn, r0)
            if rn < tol:
                tr.converged = True
                break
        tr.outer = count
        if tr.converged:
            x, r = y, ry
            break
        x, r, _ = _combine_gated(F, ys, rys, epsilon)
        if levels >= 3:
            zx.append(x)
            zr.append(r)
            if len(zx) >= 2:
                x, r, _ = _combine_gated(F, list(zx), list(zr), epsilon)
        rn = np.linalg.norm(r)
        tr.pop()
        tr.add(count, F.nevals, rn, diff=rn)
        if rn < tol:
            tr.converged = True
            break
        stalls = stalls + 1 if np.array_equal(x, x_prev) else 0
        if stalls >= 2:
            log.info("nested_rom_solve stalled in cycle %d", cycle)
            break
    return x, tr


def sampled_rom_solve(F, x0, m, rounds, tol, epsilon=DEFAULT_EPSILON,
                      step=fixed_point_step):
    """Sampled ROM: restart m-step windows, then combine their outputs.

    Each round collects ``y_1 .. y_m`` (window ``i`` restarts from
    ``y_{i-1}``) and replaces them by their DIIS combination ``z``. The
    trace has one row per window, so it lines up with :func:`anderson_solve`
    run for ``rounds * m`` outer iterations.
    """
    if m < 1 or rounds < 1:
        raise ValueError("need m >= 1 and rounds >= 1")
    x = as_vec(x0).copy()
    r = F(x)
    r0 = np.linalg.norm(r)
    tr = Trace()
    tr.add(0, F.nevals, r0, diff=r0)
    tr.converged, tr.outer = r0 < tol, 0
    outer = 0
    for _ in range(rounds):
        if tr.converged:
            break
        ys, rys = [], []
        y, ry = x, r
        for _ in range(m):
            y, ry, _ = _window(F, y, ry, m, epsilon, step)
            ys.append(y)
            rys.append(ry)
            outer += 1
            rn = np.linalg.norm(ry)
            tr.add(outer, F.nevals, rn, diff=rn)
            if rn < tol:
                break
        x, r, _ = _combine_gated(F, ys, rys, epsilon)
        rn = np.linalg.norm(r)
        tr.pop()
        tr.add(outer, F.nevals, rn, diff=rn)
        tr.outer = outer
        if rn < tol:
            tr.converged = True
            break
        _check_growth(rn, r0)
    return x, tr
