"""Test-problem generators and residual maps.

Residual convention used throughout the package: a map ``F`` pairs with the
fixed-point iteration ``x <- x + F(x)``. For a linear system ``F(x) = b - A x``
this is Richardson iteration; for the Riccati map ``F(u) = g(u) - u`` it is
the plain iterate ``u <- g(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import Diverged, DimensionError
from .linalg import as_mat, as_vec, extreme_eig, kron

OVERFLOW_LIMIT = 1e150


@dataclass
class ResidualMap:
    """A residual map ``F: R^dim_in -> R^dim_out`` with an evaluation counter.

    ``linear_part`` holds ``(A, b)`` when ``F(x) = b - A x`` exactly, or the
    dominant linear part of a perturbed problem.
    """

    dim_in: int
    dim_out: int
    func: Callable[[np.ndarray], np.ndarray]
    linear_part: Optional[tuple] = None
    secant_t: float = 1e-6
    exact_linear: bool = False
    nevals: int = field(default=0, compare=False)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = as_vec(x)
        if x.size != self.dim_in:
            raise DimensionError(f"map expects length {self.dim_in}, got {x.size}")
        self.nevals += 1
        y = self.func(x)
        if not np.all(np.isfinite(y)):
            raise Diverged("residual map produced non-finite values")
        return y

    def fixed_point(self, x):
        return as_vec(x) + self.eval(x)

    def apply_jacobian(self, d):
        """Exact ``F'(x) d = -A d`` for linear maps; None otherwise."""
        if not self.exact_linear:
            return None
        A, _ = self.linear_part
        self.nevals += 1
        return -(A @ d)


def linear_map(A, b):
    A = as_mat(A)
    b = as_vec(b)
    if A.shape[0] != b.size:
        raise DimensionError("rhs length does not match matrix rows")
    return ResidualMap(A.shape[1], A.shape[0], lambda x: b - A @ x,
                       linear_part=(A, b), exact_linear=True)


def gen_random_spd(n, seed):
    """Random symmetric matrix shifted so its smallest eigenvalue lies in (0.1, 0.9)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    Q = rng.uniform(-1.0, 1.0, size=(n, n))
    Q = 0.5 * (Q + Q.T)
    target = rng.uniform(0.1, 0.9)
    lam_min = float(np.linalg.eigvalsh(Q)[0])
    Q[np.diag_indices(n)] += target - lam_min
    return Q


@dataclass
class RiccatiProblem:
    n: int
    Q: np.ndarray
    b: float


def riccati_map(p: RiccatiProblem):
    """Residual map ``F(u) = -b u u + Q - u`` on column-major vectorized n x n matrices."""
    n, Q, b = p.n, as_mat(p.Q), float(p.b)

    def func(x):
        U = x.reshape((n, n), order="F")
        if np.max(np.abs(U), initial=0.0) > OVERFLOW_LIMIT:
            raise Diverged("Riccati iterate overflowed")
        G = Q - b * (U @ U)
        return (G - U).ravel(order="F")

    return ResidualMap(n * n, n * n, func)


def riccati_family(n, Q):
    """Map ``b -> ResidualMap`` for continuation runs."""
    return lambda b: riccati_map(RiccatiProblem(n, Q, b))


def riccati_scalar_root(b, q):
    """Positive root of ``-b u^2 - u + q = 0``."""
    if b == 0:
        return q
    return (-1.0 + np.sqrt(1.0 + 4.0 * b * q)) / (2.0 * b)


def build_tridiag_T(n):
    if n < 2:
        raise ValueError("n must be >= 2")
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def build_centered_C(n):
    if n < 2:
        raise ValueError("n must be >= 2")
    return np.eye(n, k=1) - np.eye(n, k=-1)


@dataclass
class SaddleSystem:
    A: np.ndarray
    b: np.ndarray
    n: int
    block_dims: tuple
    Abar: Optional[np.ndarray] = None

    @property
    def D(self):
        k = self.block_dims[0]
        return self.A[:k, :k]

    @property
    def E(self):
        k = self.block_dims[0]
        return self.A[k:, :k]

    def residual_map(self):
        return linear_map(self.A, self.b)


def _stokes_blocks(n):
    T = build_tridiag_T(n)
    C = build_centered_C(n)
    I = np.eye(n)
    D = kron(I, T) + kron(T, I)
    E = kron(I, C) + kron(C, I)
    return D, E


def _block(D, E, top_left=None):
    k = D.shape[0]
    A = np.zeros((2 * k, 2 * k))
    A[:k, :k] = D if top_left is None else top_left
    A[:k, k:] = E.T
    A[k:, :k] = E
    return A


def _rhs(k, seed):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.uniform(-1.0, 1.0, size=k), np.zeros(k)])


def assemble_saddle1(n, seed):
    """Stokes-like system ``[[D, E^T], [E, 0]] x = (f, 0)`` of size 2n^2."""
    D, E = _stokes_blocks(n)
    k = n * n
    return SaddleSystem(_block(D, E), _rhs(k, seed), n, (k, k))


def assemble_saddle2(n, seed):
    """Saddle system with the rank-one perturbation ``1^T E`` on the (1,1) block.

    ``Abar`` keeps the unperturbed matrix as a cheap surrogate.
    """
    D, E = _stokes_blocks(n)
    k = n * n
    dF = np.ones((k, k)) @ E
    return SaddleSystem(_block(D, E, D + dF), _rhs(k, seed), n, (k, k),
                        Abar=_block(D, E))


def sym_part(A):
    return 0.5 * (A + A.T)


def is_indefinite(A):
    S = sym_part(as_mat(A))
    return extreme_eig(S, "min").value < 0.0 < extreme_eig(S, "max").value
