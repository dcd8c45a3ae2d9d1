"""Precision-generic Jacobi-preconditioned conjugate gradients.

One identical solver serves every precision and every dual-solve approach so
that cross-approach timing comparisons are not confounded by solver choice.
Vectors are kept at the requested precision; for binary16 the matrix is
float32-backed (values rounded through binary16) and every matrix-vector
product is rounded back to binary16, emulating native half arithmetic.

Convergence is measured on the recursively updated residual, the standard
CG practice; the attainable true-residual floor grows like eps * n and
would make the tight default tolerance unreachable on fine meshes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .scalar import Precision, precision, round_to


@dataclass
class SolveReport:
    iterations: int
    final_relative_residual: float
    wall_time: float
    precision: Precision
    tol: float
    n: int
    true_residual: float = float("nan")  # ||b - Ax|| in double, set by callers


class PCGError(RuntimeError):
    """Solve failure; carries the best iterate seen and its report."""

    def __init__(self, message, x, report):
        super().__init__(message)
        self.x = x
        self.report = report


def default_tol(p: Precision) -> float:
    """100 x machine epsilon: drives the residual to the precision floor."""
    return 100.0 * p.eps


def pcg(A, b, p, tol=None, maxit=None):
    """Solve the SPD system A x = b at precision p.

    Returns (x, SolveReport).  Raises PCGError when maxit is exceeded or a
    non-finite value appears.  b = 0 returns x = 0 after zero iterations.
    """
    p = precision(p)
    n = A.shape[0]
    if tol is None:
        tol = default_tol(p)
    if maxit is None:
        maxit = 10 * n
    dt = p.dtype

    t0 = time.perf_counter()
    b = round_to(np.asarray(b), p)
    bnorm = np.linalg.norm(b.astype(np.float64))
    if bnorm == 0.0:
        report = SolveReport(0, 0.0, time.perf_counter() - t0, p, tol, n)
        return np.zeros(n, dtype=dt), report

    dinv = round_to(1.0 / A.diagonal().astype(np.float64), p)

    def matvec(v):
        return round_to(A @ v, p)

    x = np.zeros(n, dtype=dt)
    r = b.copy()
    z = round_to(dinv * r, p)
    d = z.copy()
    rho = dt.type(np.dot(r, z))

    best_x = x.copy()
    best_res = np.inf
    it = 0
    while it < maxit:
        q = matvec(d)
        dq = dt.type(np.dot(d, q))
        if not np.isfinite(dq) or dq <= 0:
            report = SolveReport(it, float(best_res), time.perf_counter() - t0, p, tol, n)
            raise PCGError(f"breakdown: d.Ad = {dq} at iteration {it}", best_x, report)
        alpha = dt.type(rho / dq)
        x = round_to(x + alpha * d, p)
        r = round_to(r - alpha * q, p)
        it += 1
        relres = float(np.linalg.norm(r.astype(np.float64)) / bnorm)
        if not np.isfinite(relres):
            report = SolveReport(it, float(best_res), time.perf_counter() - t0, p, tol, n)
            raise PCGError(f"non-finite residual at iteration {it}", best_x, report)
        if relres < best_res:
            best_res = relres
            best_x = x
        if relres <= tol:
            report = SolveReport(it, relres, time.perf_counter() - t0, p, tol, n)
            return x, report
        z = round_to(dinv * r, p)
        rho_new = dt.type(np.dot(r, z))
        beta = dt.type(rho_new / rho)
        rho = rho_new
        d = round_to(z + beta * d, p)

    report = SolveReport(it, float(best_res), time.perf_counter() - t0, p, tol, n)
    raise PCGError(
        f"PCG did not reach tol {tol:g} in {maxit} iterations "
        f"(best relative residual {best_res:g})",
        best_x,
        report,
    )
