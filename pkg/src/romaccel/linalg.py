"""Dense kernels shared by every solver.

Matrices and vectors are plain float64 ``numpy`` arrays. Matrix-valued
unknowns (the Riccati iterate) are vectorized in column-major order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotSymmetric, SingularMatrix

TOL_SOLVE = 1e-12
PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class EigEstimate:
    value: float
    iterations_used: int
    converged: bool


def as_vec(x):
    return np.asarray(x, dtype=np.float64).reshape(-1)


def as_mat(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {A.shape}")
    return A


def mat_vec(A, x):
    A = as_mat(A)
    x = as_vec(x)
    if A.shape[1] != x.size:
        raise DimensionError(f"cannot apply {A.shape} matrix to vector of length {x.size}")
    return A @ x


def solve_dense(A, b):
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises
    ------
    SingularMatrix
        If a pivot falls below ``1e-14`` times the largest column norm of `A`.
    """
    A = as_mat(A)
    b = as_vec(b)
    n, k = A.shape
    if n != k:
        raise DimensionError(f"solve_dense needs a square matrix, got {A.shape}")
    if b.size != n:
        raise DimensionError(f"rhs length {b.size} does not match {n}")
    if n == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(A)):
        raise SingularMatrix("matrix has non-finite entries", pivot=float("nan"))
    scale = np.max(np.linalg.norm(A, axis=0))
    with warnings.catch_warnings():
        # exact-zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    pmin = float(pivots.min())
    if scale == 0.0 or pmin < PIVOT_RTOL * scale:
        raise SingularMatrix(f"pivot {pmin:.3e} below threshold", pivot=pmin)
    return sla.lu_solve((lu, piv), b, check_finite=False)


def lstsq(A, b, ridge=0.0):
    """Return ``argmin |A x - b|^2 + ridge |x|^2`` via the normal equations."""
    A = as_mat(A)
    b = as_vec(b)
    if A.shape[0] != b.size:
        raise DimensionError(f"rhs length {b.size} does not match {A.shape[0]} rows")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    N = A.T @ A
    if ridge:
        N[np.diag_indices_from(N)] += ridge
    return solve_dense(N, A.T @ b)


def kron(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    p, q = B.shape
    out = np.empty((A.shape[0] * p, A.shape[1] * q))
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            out[i * p:(i + 1) * p, j * q:(j + 1) * q] = A[i, j] * B
    return out


def _power(A, shift, tol, max_it):
    # dominant eigenvalue of A + shift*I, returned without the shift
    n = A.shape[0]
    v = np.random.default_rng(12345).standard_normal(n)
    v /= np.linalg.norm(v)
    prev = None
    for it in range(1, max_it + 1):
        w = A @ v + shift * v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return EigEstimate(-shift, it, True)
        v = w / nw
        rq = float(v @ (A @ v))
        if prev is not None and abs(rq - prev) < tol * max(1.0, abs(rq)):
            return EigEstimate(rq, it, True)
        prev = rq
    return EigEstimate(prev, max_it, False)


def extreme_eig(A, which="max", tol=1e-14, max_it=20000):
    """Largest or smallest eigenvalue of a symmetric matrix by power iteration.

    The maximum is found on ``A + s I`` with ``s`` the Gershgorin radius so the
    spectrum is non-negative; the minimum on ``sigma I - A`` with ``sigma`` the
    maximum estimate.
    """
    A = as_mat(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError("extreme_eig needs a square matrix")
    asym = np.linalg.norm(A - A.T)
    if asym > 1e-12 * max(np.linalg.norm(A), 1.0):
        raise NotSymmetric(f"asymmetry {asym:.3e}")
    if A.shape[0] == 1:
        return EigEstimate(float(A[0, 0]), 1, True)
    radius = float(np.max(np.sum(np.abs(A), axis=1)))
    top = _power(A, radius, tol, max_it)
    if which == "max":
        return top
    if which != "min":
        raise ValueError("which must be 'min' or 'max'")
    sigma = top.value
    low = _power(-A, sigma, tol, max_it)
    return EigEstimate(-low.value, top.iterations_used + low.iterations_used,
                       top.converged and low.converged)
