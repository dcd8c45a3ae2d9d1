import numpy as np
import pytest
import scipy.sparse as sparse

from mpdwr.assembly import apply_dirichlet, assemble_load, assemble_stiffness
from mpdwr.driver import initial_mesh, solve_primal
from mpdwr.fespace import build_space
from mpdwr.linsolve import PCGError, default_tol, pcg
from mpdwr.problems import get_problem
from mpdwr.scalar import DOUBLE, SINGLE


def test_identity_one_iteration():
    A = sparse.identity(5, format="csr")
    b = np.arange(1.0, 6.0)
    x, rep = pcg(A, b, DOUBLE)
    assert rep.iterations == 1
    assert np.allclose(x, b)


def test_two_by_two_oracle():
    # [[4,1],[1,3]] x = (1,2): direct solve gives (1/11, 7/11)
    A = sparse.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    b = np.array([1.0, 2.0])
    x, rep = pcg(A, b, DOUBLE)
    assert np.allclose(x, [1 / 11, 7 / 11], atol=1e-12)
    assert rep.final_relative_residual <= rep.tol


def test_zero_rhs():
    A = sparse.identity(4, format="csr")
    x, rep = pcg(A, np.zeros(4), SINGLE)
    assert rep.iterations == 0
    assert not x.any()
    assert x.dtype == np.float32


def test_default_tolerances():
    assert default_tol(DOUBLE) == pytest.approx(100 * np.finfo(np.float64).eps)
    assert default_tol(SINGLE) == pytest.approx(100 * np.finfo(np.float32).eps)


def test_maxit_error_carries_best_iterate():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    A = sparse.csr_matrix(M @ M.T + 30 * np.eye(30))
    b = rng.standard_normal(30)
    with pytest.raises(PCGError) as err:
        pcg(A, b, DOUBLE, tol=1e-30, maxit=3)
    assert err.value.x.shape == (30,)
    assert err.value.report.iterations == 3
    assert np.isfinite(err.value.report.final_relative_residual)


def test_report_fields():
    A = sparse.identity(3, format="csr", dtype=np.float32)
    x, rep = pcg(A, np.ones(3, np.float32), SINGLE)
    assert rep.precision is SINGLE
    assert rep.n == 3
    assert rep.wall_time >= 0.0


def test_zero_bc_patch():
    # u = 0 on the boundary of a pure-Dirichlet problem with f = 0
    prob_zero = lambda x, y: 0.0 * x
    mesh = initial_mesh(1)
    sp = build_space(mesh, 1, "double")
    A = assemble_stiffness(sp)
    F = assemble_load(sp, prob_zero)
    A, F = apply_dirichlet(A, F, sp.boundary_dofs)
    x, rep = pcg(A, F, DOUBLE)
    assert rep.iterations == 0
    assert not x.any()


def test_single_vs_double_coefficient_gap():
    # loose cross-precision agreement bound on a moderate mesh
    prob = get_problem("e1")
    mesh = initial_mesh(2)
    u_s, _ = solve_primal(mesh, prob, "single")
    u_d, _ = solve_primal(mesh, prob, "double")
    rel = np.linalg.norm(u_s.coefficients.astype(np.float64) - u_d.coefficients)
    rel /= np.linalg.norm(u_d.coefficients)
    assert rel <= 1e-3


def test_poisson_solve_meets_tolerance():
    prob = get_problem("e2")
    mesh = initial_mesh(2)
    for p in ("single", "double"):
        u, rep = solve_primal(mesh, prob, p)
        assert rep.final_relative_residual <= rep.tol


def test_deterministic_solve():
    prob = get_problem("e1")
    mesh = initial_mesh(1)
    u1, _ = solve_primal(mesh, prob, "single")
    u2, _ = solve_primal(mesh, prob, "single")
    assert u1.coefficients.tobytes() == u2.coefficients.tobytes()
