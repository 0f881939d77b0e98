import numpy as np
import pytest

from romaccel.anderson import fixed_point_solve
from romaccel.errors import Diverged
from romaccel.linalg import extreme_eig, solve_dense
from romaccel.problems import (RiccatiProblem, assemble_saddle1, assemble_saddle2,
                               build_centered_C, build_tridiag_T, gen_random_spd,
                               is_indefinite, linear_map, riccati_map, riccati_scalar_root,
                               sym_part)


def test_gen_random_spd_scalar():
    Q = gen_random_spd(1, 123)
    assert Q.shape == (1, 1)
    assert 0.0 < Q[0, 0] < 1.0


@pytest.mark.parametrize("seed", [0, 1, 42])
def test_gen_random_spd_properties(seed):
    Q = gen_random_spd(10, seed)
    np.testing.assert_array_equal(Q, Q.T)
    lam = extreme_eig(Q, "min").value
    assert 0.0 < lam < 1.0
    assert lam == pytest.approx(np.linalg.eigvalsh(Q)[0], abs=1e-8)


def test_gen_random_spd_deterministic():
    np.testing.assert_array_equal(gen_random_spd(10, 9), gen_random_spd(10, 9))
    assert not np.array_equal(gen_random_spd(10, 9), gen_random_spd(10, 10))


def test_riccati_b_zero_fixed_after_one_step():
    Q = gen_random_spd(4, 0)
    F = riccati_map(RiccatiProblem(4, Q, 0.0))
    u1 = F.fixed_point(np.zeros(16))
    np.testing.assert_array_equal(u1, Q.ravel(order="F"))
    np.testing.assert_array_equal(F(u1), 0.0)


def test_riccati_scalar_root():
    # -0.05 u^2 - u + 0.5 = 0
    u = riccati_scalar_root(0.05, 0.5)
    assert u == pytest.approx(0.48809, abs=1e-5)
    F = riccati_map(RiccatiProblem(1, np.array([[0.5]]), 0.05))
    assert abs(F(np.array([u]))[0]) < 1e-14
    x, tr = fixed_point_solve(F, np.zeros(1), 100, 1e-12)
    assert tr.converged and x[0] == pytest.approx(u, abs=1e-11)


def test_riccati_map_is_column_major_matrix_product():
    rng = np.random.default_rng(2)
    Q = gen_random_spd(3, 2)
    U = rng.standard_normal((3, 3))
    F = riccati_map(RiccatiProblem(3, Q, 0.3))
    expect = (-0.3 * U @ U + Q - U).ravel(order="F")
    np.testing.assert_allclose(F(U.ravel(order="F")), expect, rtol=1e-14)
    assert F.dim_in == F.dim_out == 9


def test_riccati_plain_converges_small_b():
    Q = gen_random_spd(10, 0)
    F = riccati_map(RiccatiProblem(10, Q, 0.05))
    x, tr = fixed_point_solve(F, np.zeros(100), 200, 1e-6, batch=3)
    assert tr.converged
    # the slowest mode contracts by 2 b u* per sweep, about 0.42 for this Q
    assert tr.outer <= 10
    U = x.reshape(10, 10, order="F")
    rel = np.linalg.norm(-0.05 * U @ U + Q - U) / np.linalg.norm(Q)
    assert rel < 10 * 1e-6


def test_riccati_overflow_is_diverged():
    F = riccati_map(RiccatiProblem(2, np.eye(2), 1.0))
    with pytest.raises(Diverged):
        F(np.full(4, 1e160))


def test_tridiag_T():
    np.testing.assert_array_equal(build_tridiag_T(2), [[2, -1], [-1, 2]])
    np.testing.assert_allclose(np.linalg.eigvalsh(build_tridiag_T(3)),
                               [2 - np.sqrt(2), 2, 2 + np.sqrt(2)], atol=1e-14)
    T = build_tridiag_T(7)
    np.testing.assert_array_equal(T, T.T)


def test_centered_C():
    np.testing.assert_array_equal(build_centered_C(2), [[0, 1], [-1, 0]])
    C = build_centered_C(5)
    np.testing.assert_array_equal(C.T, -C)
    np.testing.assert_array_equal(build_centered_C(3)[1], [-1, 0, 1])


def test_saddle1_structure():
    S = assemble_saddle1(10, 0)
    k = 100
    assert S.A.shape == (200, 200)
    assert S.Abar is None
    np.testing.assert_array_equal(S.A[:k, k:], S.A[k:, :k].T)
    np.testing.assert_array_equal(S.A[k:, k:], 0.0)
    np.testing.assert_array_equal(S.b[k:], 0.0)
    assert np.all(np.abs(S.b[:k]) <= 1.0)
    lam = 2 * (2 - 2 * np.cos(np.pi / 11))
    assert extreme_eig(S.D, "min").value == pytest.approx(0.1620, abs=1e-3)
    assert extreme_eig(S.D, "min").value == pytest.approx(lam, abs=1e-8)
    assert is_indefinite(S.A)


def test_saddle1_E_stencil_row_sums():
    S = assemble_saddle1(4, 0)
    C = build_centered_C(4)
    c = C.sum(axis=1)
    # row (i, j) of E = I (x) C + C (x) I sums to c_j + c_i
    expect = (c[None, :] + c[:, None]).ravel()
    np.testing.assert_allclose(S.E @ np.ones(16), expect, atol=1e-15)


def test_saddle1_consistent_rhs_solution():
    S = assemble_saddle1(4, 1)
    x = np.linalg.lstsq(S.A, S.b, rcond=None)[0]
    assert np.linalg.norm(S.A @ x - S.b) / np.linalg.norm(S.b) < 1e-8


def test_saddle2_perturbation():
    S = assemble_saddle2(4, 0)
    k = 16
    diff = S.A - S.Abar
    np.testing.assert_array_equal(diff[k:, :], 0.0)
    np.testing.assert_array_equal(diff[:, k:], 0.0)
    assert np.linalg.matrix_rank(diff[:k, :k]) <= 1
    ones_E = np.ones((1, k)) @ S.E
    # every row of the perturbation equals 1^T E
    assert np.linalg.norm(diff) == pytest.approx(np.sqrt(k) * np.linalg.norm(ones_E))
    np.testing.assert_array_equal(S.b, assemble_saddle1(4, 0).b)


def test_linear_map_exact():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    b = rng.standard_normal(5)
    F = linear_map(A, b)
    x = rng.standard_normal(5)
    np.testing.assert_allclose(F(x), b - A @ x, atol=1e-14)
    xs = solve_dense(A, b)
    assert np.linalg.norm(F(xs)) / np.linalg.norm(b) < 1e-8


def test_sym_part():
    A = np.array([[1.0, 2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(sym_part(A), [[1, 1], [1, 3]])
