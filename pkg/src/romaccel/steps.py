"""Step-size rules, search directions and conjugate gradients.

Sign convention: for a linear problem the residual is ``r = b - A x`` (the
value of ``F(x) = b - A x``) and every update has the form ``x <- x + a p``.
With a general map the quotients use the secant image ``J p`` of ``F`` and
the same formulas hold with ``A p`` replaced by ``-J p``.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (DegenerateSubspace, Diverged, IndefiniteBreakdown,
                     SingularMatrix, ZeroCurvature)
from .linalg import as_vec, solve_dense
from .records import Trace


def _operator(A):
    if callable(A):
        return A
    A = np.asarray(A, dtype=float)
    return lambda v: A @ v


def default_secant_t(x, d):
    return 1e-6 * (1.0 + np.linalg.norm(x)) / (np.linalg.norm(d) + 1e-300)


@dataclass
class SecantOperator:
    """Difference approximation ``d -> (F(x + t d) - F(x)) / t`` at a base point.

    ``t=None`` picks a scale-aware increment per direction.
    """

    x: np.ndarray
    map: object
    t: Optional[float] = None
    fx: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = as_vec(self.x)
        if self.t is not None and not self.t > 0:
            raise ValueError("secant increment must be positive")
        if self.fx is None:
            self.fx = self.map(self.x)

    def __call__(self, d):
        return secant_apply(self, d)


def secant_apply(s: SecantOperator, d):
    d = as_vec(d)
    nd = np.linalg.norm(d)
    if nd == 0:
        raise ValueError("direction must be non-zero")
    t = s.t if s.t is not None else default_secant_t(s.x, d)
    try:
        fxt = s.map(s.x + t * d)
    except FloatingPointError as exc:
        raise Diverged(str(exc)) from exc
    return (fxt - s.fx) / t


def cauchy_step(A_apply, r, p):
    """``(r, Ap) / (Ap, Ap)``: the exact minimizer of ``|r - a A p|`` over ``a``."""
    Ap = _operator(A_apply)(as_vec(p))
    den = float(Ap @ Ap)
    if den == 0.0:
        raise ZeroCurvature("A p vanishes")
    return float(as_vec(r) @ Ap) / den


def approx_cauchy_step(Abar, r):
    """``(r, Abar r) / (Abar r, Abar r)`` with the true residual ``r``."""
    return cauchy_step(Abar, r, r)


def two_direction_step(A_apply, r, p):
    """Optimal ``(a, b)`` for ``x + a r + b p`` from the 2x2 Gram system.

    When the Gram matrix is singular (collinear directions) the Cauchy step on
    the dominant direction is returned with the other coefficient zero and a
    :class:`DegenerateSubspace` warning.
    """
    A = _operator(A_apply)
    r = as_vec(r)
    p = as_vec(p)
    Ar, Ap = A(r), A(p)
    G = np.array([[Ar @ Ar, Ar @ Ap], [Ap @ Ar, Ap @ Ap]])
    rhs = np.array([r @ Ar, r @ Ap])
    scale = max(G[0, 0], G[1, 1])
    if scale == 0.0:
        raise ZeroCurvature("A r and A p both vanish")
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    if abs(det) > 1e-12 * scale * scale:
        try:
            a, b = solve_dense(G / scale, rhs / scale)
            return float(a), float(b)
        except SingularMatrix:
            pass
    warnings.warn("collinear search directions", DegenerateSubspace, stacklevel=2)
    if G[0, 0] >= G[1, 1]:
        return float(rhs[0] / G[0, 0]), 0.0
    return 0.0, float(rhs[1] / G[1, 1])


def bb_step(dx, dr, variant="bb1"):
    """Barzilai-Borwein quotient ``(dx,dx)/(dx,dr)`` (bb1) or ``(dr,dx)/(dr,dr)`` (bb2)."""
    dx = as_vec(dx)
    dr = as_vec(dr)
    if variant == "bb1":
        num, den = dx @ dx, dx @ dr
    elif variant == "bb2":
        num, den = dr @ dx, dr @ dr
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if den == 0.0:
        raise ZeroCurvature("Barzilai-Borwein denominator vanishes")
    return float(num / den)


def conjugate_direction(r, p_prev):
    r = as_vec(r)
    p_prev = as_vec(p_prev)
    pp = p_prev @ p_prev
    if pp == 0.0:
        return r.copy()
    return r - (r @ p_prev) / pp * p_prev


def polak_ribiere(r_new, z_new, r_old, z_old):
    return float(r_new @ (z_new - z_old)) / float(r_old @ z_old)


def fletcher_reeves(r_new, z_new, r_old, z_old):
    return float(z_new @ r_new) / float(z_old @ r_old)


def pcg_run(A, b, P_apply=None, x0=None, tol=1e-10, max_it=1000,
            beta="fr", spd=True):
    """Preconditioned conjugate gradients.

    ``P_apply`` maps a residual to ``P^{-1} r`` (identity by default). The
    Fletcher-Reeves quotient is used unless ``beta="pr"``. With ``spd=False``
    a non-positive curvature ``(p, Ap)`` switches that iteration to the
    residual-minimizing Cauchy step instead of raising.

    Returns ``(x, trace)`` with ``trace.converged`` set.
    """
    Aop = _operator(A)
    b = as_vec(b)
    P = P_apply if P_apply is not None else (lambda v: v)
    x = np.zeros_like(b) if x0 is None else as_vec(x0).copy()
    r = b - Aop(x)
    z = P(r)
    p = z.copy()
    rz = float(r @ z)
    tr = Trace()
    tr.add(0, 1, np.linalg.norm(r))
    tr.converged = np.linalg.norm(r) <= tol * max(np.linalg.norm(b), 1e-300)
    nb = max(np.linalg.norm(b), 1e-300)
    bfun = polak_ribiere if beta == "pr" else fletcher_reeves
    for k in range(1, max_it + 1):
        if tr.converged:
            break
        Ap = Aop(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            if spd:
                raise IndefiniteBreakdown(f"(p, Ap) = {pAp:.3e} at iteration {k}")
            if not Ap @ Ap > 0.0:
                raise ZeroCurvature("A p vanishes")
            alpha = float(r @ Ap) / float(Ap @ Ap)
        else:
            alpha = rz / pAp
        x = x + alpha * p
        r_new = r - alpha * Ap
        z_new = P(r_new)
        rz_new = float(r_new @ z_new)
        tr.add(k, k + 1, np.linalg.norm(r_new), step_size=alpha)
        if np.linalg.norm(r_new) <= tol * nb:
            tr.converged = True
            r = r_new
            break
        beta_k = bfun(r_new, z_new, r, z)
        p = z_new + beta_k * p
        r, z, rz = r_new, z_new, rz_new
    return x, tr


@dataclass
class StepPolicy:
    """Step-size rule for the linear variable-step iterate ``x + a r``.

    kind: ``cauchy``, ``approx_cauchy``, ``two_direction``,
    ``approx_two_direction``, ``bb1``, ``bb2`` or ``fixed``.
    """

    kind: str = "cauchy"
    surrogate: Optional[np.ndarray] = None
    gain: Optional[np.ndarray] = None
    alpha: float = 1.0

    def __post_init__(self):
        kinds = {"cauchy", "approx_cauchy", "two_direction",
                 "approx_two_direction", "bb1", "bb2", "fixed"}
        if self.kind not in kinds:
            raise ValueError(f"unknown step kind {self.kind!r}")
        needs = self.kind.startswith("approx")
        if needs != (self.surrogate is not None):
            raise ValueError("surrogate is required exactly for the approx_* kinds")


class VariableStep:
    """Iterate generator ``(x, r) -> x_next`` for ``F(x) = b - A x``.

    Counts products with ``A`` and with the surrogate in ``matvecs``. When a
    quotient hits zero curvature the mean of the last three accepted step
    sizes is used instead. The latest step coefficients are kept in
    ``last_step`` for tracing.
    """

    def __init__(self, A, policy: StepPolicy):
        self.A = np.asarray(A, dtype=float)
        self.policy = policy
        self.matvecs = 0
        self.history = deque(maxlen=3)
        self.last_step = None
        self._prev = None

    def _A(self, v):
        self.matvecs += 1
        return self.A @ v

    def _Abar(self, v):
        self.matvecs += 1
        return self.policy.surrogate @ v

    def _fallback(self):
        if not self.history:
            raise ZeroCurvature("no accepted step sizes to extrapolate from")
        return float(np.mean(self.history))

    def __call__(self, x, r):
        pol = self.policy
        d = r if pol.gain is None else pol.gain @ r
        kind = pol.kind
        try:
            if kind == "fixed":
                a, step = pol.alpha, pol.alpha * d
            elif kind == "cauchy":
                a = cauchy_step(self._A, r, d)
                step = a * d
            elif kind == "approx_cauchy":
                a = cauchy_step(self._Abar, r, d)
                step = a * d
            elif kind in ("two_direction", "approx_two_direction"):
                op = self._A if kind == "two_direction" else self._Abar
                p = op(d)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateSubspace)
                    a, bcoef = two_direction_step(op, r, p)
                step = a * d + bcoef * p
                self.last_step = (a, bcoef)
            else:
                if self._prev is None:
                    a = cauchy_step(self._A, r, d)
                else:
                    xp, rp = self._prev
                    # F = b - A x, so the secant of -F matches dx
                    a = bb_step(x - xp, rp - r, kind)
                step = a * d
        except ZeroCurvature:
            a = self._fallback()
            step = a * d
        self.history.append(a)
        if kind not in ("two_direction", "approx_two_direction"):
            self.last_step = a
        self._prev = (x, r)
        return x + step


def secant_cauchy_step(F, x, r, p, t=None):
    """Approximate Cauchy step ``-(r, Jp) / (Jp, Jp)`` for a general map."""
    Jp = secant_apply(SecantOperator(x, F, t, fx=r), p)
    den = float(Jp @ Jp)
    if den == 0.0:
        raise ZeroCurvature("J p vanishes")
    return -float(r @ Jp) / den
