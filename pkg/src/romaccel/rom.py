"""Reduced-order (ROM) solvers for ``min |F(x)|^2``.

The unknown is restricted to a small linear manifold ``x = x_a + V a`` spanned
by stored iterates (``x_a = 0``) or residuals (``x_a`` = current iterate), and
the merit ``|F(x)|^2 + beta |x|^2`` is minimized over the coefficients by a
reduced Gauss-Newton loop. Jacobian columns come from the exact linear
operator when the map is known to be linear and from secant differences
otherwise.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .anderson import WeightVector, simplex_qp, solve_diis_weights
from .errors import (DegenerateSubspace, Diverged, SingularGram, SingularMatrix,
                     ZeroCurvature)
from .linalg import as_vec, lstsq
from .records import Trace
from .steps import SecantOperator, secant_apply

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
GRAM_COND_LIMIT = 1e12


@dataclass
class RomConfig:
    constraint_mode: str = "affine"
    max_gn_iters: int = 10
    gn_tol: float = 1e-10
    ridge: float = 1e-12
    beta: float = 0.0
    merit_gate: bool = True
    epsilon: float = 1e-30

    def __post_init__(self):
        if self.constraint_mode not in ("affine", "convex", "unconstrained"):
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")
        if self.max_gn_iters < 1:
            raise ValueError("max_gn_iters must be >= 1")
        if self.ridge < 0 or self.beta < 0:
            raise ValueError("ridge and beta must be non-negative")


@dataclass
class RomResult:
    weights: WeightVector
    x_out: np.ndarray
    merit_before: float
    merit_after: float
    gn_iterations: int
    accepted: bool
    residual: Optional[np.ndarray] = None


def _merit(r, x, beta):
    m = float(r @ r)
    if beta:
        m += beta * float(x @ x)
    return m


def rom_objective(F, basis, alpha, cfg: RomConfig = RomConfig()):
    """``|F(sum a_k x_k)|^2 + beta |sum a_k x_k|^2``."""
    basis = [as_vec(v) for v in basis]
    alpha = as_vec(alpha)
    if len(basis) == 0 or len(basis) != alpha.size:
        raise ValueError("basis and coefficient lengths differ")
    x = np.column_stack(basis) @ alpha
    return _merit(F(x), x, cfg.beta)


def _jacobian_columns(F, x, fx, cols):
    out = []
    for d in cols.T:
        if not np.any(d):
            out.append(np.zeros_like(fx))
            continue
        Jd = F.apply_jacobian(d) if getattr(F, "exact_linear", False) else None
        if Jd is None:
            Jd = secant_apply(SecantOperator(x, F, fx=fx), d)
        out.append(Jd)
    return np.column_stack(out)


def rom_gradient(F, basis, alpha, cfg: RomConfig = RomConfig()):
    """Gradient of :func:`rom_objective` with respect to all coefficients."""
    X = np.column_stack([as_vec(v) for v in basis])
    alpha = as_vec(alpha)
    x = X @ alpha
    fx = F(x)
    M = _jacobian_columns(F, x, fx, X)
    g = 2.0 * (M.T @ fx)
    if cfg.beta:
        g += 2.0 * cfg.beta * (X.T @ x)
    return g


def _reduced_lstsq(M, rhs, ridge):
    # ridge is relative to the mean diagonal of M^T M so tiny columns are not swamped
    scale = float(np.sum(M * M)) / max(M.shape[1], 1)
    if not scale > 0:
        return np.zeros(M.shape[1])
    try:
        return lstsq(M, rhs, ridge * scale)
    except SingularMatrix:
        return lstsq(M, rhs, max(ridge, 1e-12) * scale)


def _reduction(mode, m):
    # coefficient increment = P @ delta
    if mode == "affine" and m > 1:
        return np.vstack([np.eye(m - 1), -np.ones((1, m - 1))])
    if mode == "affine":
        return np.zeros((1, 0))
    return np.eye(m)


def _gn(F, anchor, V, alpha, fx, mode, cfg):
    """Reduced Gauss-Newton from coefficients `alpha`; returns (alpha, x, fx, merit, iters, accepted)."""
    m = V.shape[1]
    x = anchor + V @ alpha
    merit = _merit(fx, x, cfg.beta)
    P = _reduction(mode, m)
    accepted = False
    it = 0
    sb = np.sqrt(cfg.beta)
    for it in range(1, cfg.max_gn_iters + 1):
        if merit == 0.0 or P.shape[1] == 0:
            break
        M = _jacobian_columns(F, x, fx, V)
        if mode == "convex":
            H = M.T @ M
            rid = cfg.ridge * float(np.trace(H)) / m
            H += rid * np.eye(m)
            y = fx - M @ alpha
            g = M.T @ y - rid * alpha
            if cfg.beta:
                H += cfg.beta * (V.T @ V)
                g += cfg.beta * (V.T @ anchor)
            step = simplex_qp(H, g) - alpha
        else:
            MP = M @ P
            rhs = -fx
            if cfg.beta:
                MP = np.vstack([MP, sb * (V @ P)])
                rhs = np.concatenate([rhs, -sb * x])
            delta = _reduced_lstsq(MP, rhs, cfg.ridge)
            step = P @ delta
        if not np.any(step):
            break
        s = 1.0
        improved = False
        for _ in range(MAX_HALVINGS + 1):
            a_try = alpha + s * step
            x_try = anchor + V @ a_try
            try:
                f_try = F(x_try)
            except Diverged:
                s *= 0.5
                continue
            m_try = _merit(f_try, x_try, cfg.beta)
            if not cfg.merit_gate or m_try < merit:
                improved = True
                break
            s *= 0.5
        if not improved:
            break
        accepted = True
        decrease = merit - m_try
        alpha, x, fx, merit = a_try, x_try, f_try, m_try
        if decrease <= cfg.gn_tol * max(merit, 1e-300) or merit == 0.0:
            break
    return alpha, x, fx, merit, it, accepted


def _prune(basis, rs):
    while len(basis) > 1:
        B = np.array([[a @ b for b in rs] for a in rs])
        d = np.sqrt(np.maximum(np.diag(B), 1e-300))
        if np.linalg.cond(B / np.outer(d, d)) <= GRAM_COND_LIMIT:
            break
        basis, rs = basis[1:], rs[1:]
    return basis, rs


def rom_solve(F, basis, cfg: RomConfig = RomConfig(), init: Optional[WeightVector] = None,
              residuals=None, prune=True):
    """Minimize the ROM merit over combinations of `basis`.

    The coefficients start from the Anderson (DIIS) weights of the basis
    residuals, or from the best single basis member if that is better, and are
    refined by reduced Gauss-Newton with halving line search. Affine
    constraints are eliminated by substitution; convex ones are handled by a
    simplex QP in every step.

    Raises
    ------
    NoDescent
        Never raised: a rejected refinement is reported as ``accepted=False``.
    """
    basis = [as_vec(v) for v in basis]
    if not basis:
        raise ValueError("basis must be non-empty")
    rs = [as_vec(r) for r in residuals] if residuals is not None else [F(v) for v in basis]
    mode = cfg.constraint_mode
    if prune and init is None and len(basis) > 1:
        basis, rs = _prune(basis, rs)
    m = len(basis)
    V = np.column_stack(basis)
    anchor = np.zeros(V.shape[0])
    vertex = [_merit(r, v, cfg.beta) for r, v in zip(rs, basis)]
    j = int(np.argmin(vertex))
    if init is not None:
        a0 = as_vec(init.weights).copy()
    else:
        dmode = "convex" if mode == "convex" else "affine"
        try:
            a0 = solve_diis_weights(rs, cfg.epsilon, dmode).weights
        except SingularGram:
            a0 = np.eye(m)[j]
    x0 = V @ a0
    try:
        f0 = F(x0)
        merit0 = _merit(f0, x0, cfg.beta)
    except Diverged:
        a0, f0, merit0 = np.eye(m)[j], rs[j], vertex[j]
    merit_before = merit0 if init is not None else min(merit0, vertex[j])
    best = _gn(F, anchor, V, a0, f0, mode, cfg)
    if init is None and best[3] > vertex[j]:
        # the Anderson start led to a worse local minimum than a basis member
        alt = _gn(F, anchor, V, np.eye(m)[j], rs[j], mode, cfg)
        if alt[3] <= best[3]:
            best = alt[:5] + (True,)
    alpha, x, fx, merit, iters, accepted = best
    if not accepted:
        log.debug("rom_solve: no Gauss-Newton step accepted")
    return RomResult(WeightVector(alpha, mode), x, merit_before, merit, iters,
                     accepted, fx)


def residual_rom_solve(F, x_anchor, residual_basis, cfg: RomConfig = RomConfig()):
    """Minimize ``|F(x_anchor + sum a_k r_k)|^2`` over unconstrained ``a``."""
    x_anchor = as_vec(x_anchor)
    cols = [as_vec(r) for r in residual_basis]
    if not cols:
        raise ValueError("residual basis must be non-empty")
    V = np.column_stack(cols)
    f0 = F(x_anchor)
    a0 = np.zeros(V.shape[1])
    merit0 = _merit(f0, x_anchor, cfg.beta)
    if not np.any(V):
        return RomResult(WeightVector(a0, "unconstrained"), x_anchor.copy(),
                         merit0, merit0, 0, False, f0)
    alpha, x, fx, merit, iters, accepted = _gn(F, x_anchor, V, a0, f0,
                                               "unconstrained", cfg)
    return RomResult(WeightVector(alpha, "unconstrained"), x, merit0, merit,
                     iters, accepted, fx)


def sequential_refine(F, xbar, fx=None, t=None):
    """One-rank Gauss-Newton polish ``xbar + b F(xbar)``, ``b = -(F, Jd)/(Jd, Jd)``."""
    xbar = as_vec(xbar)
    fx = F(xbar) if fx is None else fx
    if not np.any(fx):
        raise ValueError("xbar is already a root")
    Jd = F.apply_jacobian(fx) if getattr(F, "exact_linear", False) else None
    if Jd is None:
        Jd = secant_apply(SecantOperator(xbar, F, t, fx=fx), fx)
    den = float(Jd @ Jd)
    if den == 0.0:
        raise ZeroCurvature("J F(xbar) vanishes")
    beta = -float(fx @ Jd) / den
    return xbar + beta * fx


def random_direction_gn(F, x0, omega, samples, seed, cfg: RomConfig = RomConfig(),
                        directions=None):
    """Gauss-Newton steps over random direction sets, ensembled by ROM.

    Sample ``s`` draws ``omega`` Gaussian directions from the generator seeded
    with ``(seed, s)``, orthonormalizes them, and solves the ridge least squares
    ``min |J W b + F(x0)|^2`` with secant columns ``J W``. The candidates
    ``x0 + W b`` are combined with :func:`rom_solve`.
    """
    if omega < 1 or samples < 1:
        raise ValueError("omega and samples must be >= 1")
    x0 = as_vec(x0)
    fx = F(x0)
    n = x0.size
    cands = []
    for s in range(samples):
        if directions is not None:
            W = np.column_stack([as_vec(d) for d in directions])
        else:
            rng = np.random.default_rng([seed, s])
            W = rng.standard_normal((n, omega))
            if omega <= n:
                W = np.linalg.qr(W)[0]
            else:
                W /= np.linalg.norm(W, axis=0)
        J = _jacobian_columns(F, x0, fx, W)
        beta = _reduced_lstsq(J, -fx, cfg.ridge)
        cands.append(x0 + W @ beta)
    if len(cands) == 1:
        x = cands[0]
        f = F(x)
        mer = _merit(f, x, cfg.beta)
        return RomResult(WeightVector(np.ones(1), cfg.constraint_mode), x,
                         mer, mer, 0, True, f)
    return rom_solve(F, cands, cfg)


def newton_krylov_basis(F, x0, d0, k, t=None):
    """Directions ``d_{j+1} = J d_j`` (secant at ``x0``), each normalized to unit length."""
    d = as_vec(d0)
    if not np.linalg.norm(d) > 0:
        raise ValueError("d0 must be non-zero")
    if k < 1:
        raise ValueError("k must be >= 1")
    x0 = as_vec(x0)
    fx = F(x0)
    exact = getattr(F, "exact_linear", False)
    out = []
    prev = d / np.linalg.norm(d)
    for _ in range(k):
        nxt = F.apply_jacobian(d) if exact else secant_apply(SecantOperator(x0, F, t, fx=fx), d)
        nn = np.linalg.norm(nxt)
        if nn == 0.0:
            raise ZeroCurvature("Newton-Krylov direction mapped to zero")
        nxt = nxt / nn
        if abs(abs(nxt @ prev) - 1.0) < 1e-12:
            warnings.warn("Newton-Krylov basis degenerated", DegenerateSubspace, stacklevel=2)
        out.append(nxt)
        prev = d = nxt
    return out


def damped_newton_rom(F, x0, m, cfg: RomConfig = RomConfig(), max_outer=50, tol=1e-10):
    """Damped subspace Newton steps followed by a ROM combination.

    Each inner step solves the reduced Gauss-Newton problem over the current
    residual and the previous increments (secant columns), with halving until
    ``|F|`` decreases. After ``m`` inner steps the iterates are combined by
    :func:`rom_solve` and the next outer iteration restarts from the result.
    Convergence: ``|F(x)| < tol``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    u = as_vec(x0).copy()
    r = F(u)
    tr = Trace()
    tr.add(0, F.nevals, np.linalg.norm(r))
    tr.converged, tr.outer = np.linalg.norm(r) < tol, 0
    for outer in range(1, max_outer + 1):
        if tr.converged:
            break
        us, rs, incs = [u], [r], []
        for _ in range(m):
            cols = [r] + incs[-(m - 1):] if m > 1 else [r]
            D = np.column_stack(cols)
            J = _jacobian_columns(F, u, r, D)
            coef = _reduced_lstsq(J, -r, cfg.ridge)
            step = D @ coef
            s, nr = 1.0, np.linalg.norm(r)
            moved = False
            for _ in range(MAX_HALVINGS + 1):
                try:
                    r_try = F(u + s * step)
                except Diverged:
                    s *= 0.5
                    continue
                if np.linalg.norm(r_try) < nr:
                    moved = True
                    break
                s *= 0.5
            if not moved:
                break
            incs.append(s * step)
            u = u + s * step
            r = r_try
            us.append(u)
            rs.append(r)
            if np.linalg.norm(r) < tol:
                break
        if len(us) > 1:
            res = rom_solve(F, us, cfg, residuals=rs)
            if res.merit_after <= float(r @ r):
                u, r = res.x_out, res.residual
        tr.add(outer, F.nevals, np.linalg.norm(r))
        tr.outer = outer
        if np.linalg.norm(r) < tol:
            tr.converged = True
            break
        if len(us) == 1:
            break
    return u, tr
