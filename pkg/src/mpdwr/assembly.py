"""Stiffness/load/functional assembly and Dirichlet elimination.

All assembly arithmetic (Jacobians, basis gradients, quadrature
accumulation) runs at the target space's precision with a deterministic
element-then-quadrature-point order, so the same mesh assembled twice gives
bit-identical matrices.  Matrices are scipy CSR at the precision's storage
dtype: binary16 values are rounded through float16 and stored in float32
because scipy.sparse has no binary16 kernels.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sparse

from .fespace import ASSEMBLY_DEGREE, EVALUATION_DEGREE, FESpace, basis_gradients, basis_values, quadrature
from .scalar import round_to


def _element_geometry(space: FESpace):
    """Jacobian data at the space's precision: J columns, detJ, inv(J)^T."""
    p = space.precision
    verts = round_to(space.mesh.vertices, p)
    v = verts[space.mesh.elements]
    a = v[:, 0]
    J = np.stack([v[:, 1] - a, v[:, 2] - a], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("degenerate element: non-positive Jacobian determinant")
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1]
    invJT[:, 0, 1] = -J[:, 1, 0]
    invJT[:, 1, 0] = -J[:, 0, 1]
    invJT[:, 1, 1] = J[:, 0, 0]
    invJT = invJT / det[:, None, None]
    return a, J, det, invJT


def _to_csr(space: FESpace, local: np.ndarray):
    """Scatter (ne, nloc, nloc) local blocks into global CSR."""
    dof = space.element_dof_map
    nloc = dof.shape[1]
    rows = np.repeat(dof, nloc, axis=1).ravel()
    cols = np.tile(dof, (1, nloc)).ravel()
    vals = local.ravel()
    A = sparse.coo_matrix(
        (vals, (rows, cols)), shape=(space.n_dofs, space.n_dofs)
    ).tocsr()
    A.sum_duplicates()
    return A


def assemble_stiffness(space: FESpace, exactness: int = ASSEMBLY_DEGREE):
    """A_ij = sum_K int_K grad(phi_j) . grad(phi_i), at space precision."""
    p = space.precision
    rule = quadrature(exactness)
    _, _, det, invJT = _element_geometry(space)
    gref = round_to(basis_gradients(space.degree, rule.points), p)
    w = round_to(rule.weights, p)

    ne = space.mesh.n_elements
    nloc = space.ndof_local
    local = np.zeros((ne, nloc, nloc), dtype=p.dtype)
    for q in range(rule.points.shape[0]):
        g = np.einsum("eab,ib->eia", invJT, gref[q])  # (ne, nloc, 2)
        contrib = np.einsum("eia,eja->eij", g, g)
        local += (w[q] * det)[:, None, None] * contrib
    return _to_csr(space, round_to(local, p).astype(p.sparse_dtype))


def assemble_load(space: FESpace, f, exactness: int = ASSEMBLY_DEGREE):
    """F_i = sum_K int_K f phi_i, at space precision."""
    p = space.precision
    rule = quadrature(exactness)
    a, J, det, _ = _element_geometry(space)
    phi = round_to(basis_values(space.degree, rule.points), p)
    w = round_to(rule.weights, p)
    ref = round_to(rule.points[:, 1:], p)

    ne = space.mesh.n_elements
    local = np.zeros((ne, space.ndof_local), dtype=p.dtype)
    for q in range(rule.points.shape[0]):
        x = a + J @ ref[q]
        fq = round_to(np.asarray(f(x[:, 0], x[:, 1])), p)
        local += ((w[q] * det) * fq)[:, None] * phi[q][None, :]

    F = np.zeros(space.n_dofs, dtype=p.dtype)
    np.add.at(F, space.element_dof_map.ravel(), local.ravel())
    return round_to(F, p)


def assemble_functional(space: FESpace, functional, exactness: int = EVALUATION_DEGREE):
    """J_i = |Omega_J|^-1 int_{Omega_J} phi_i by characteristic-function
    quadrature: points outside the region contribute zero."""
    if functional.area <= 0:
        raise ValueError(f"functional {functional.name} has zero-area region")
    p = space.precision
    rule = quadrature(exactness)
    a, J, det, _ = _element_geometry(space)
    phi = round_to(basis_values(space.degree, rule.points), p)
    w = round_to(rule.weights, p)
    ref = round_to(rule.points[:, 1:], p)
    inv_area = round_to(1.0 / functional.area, p)

    ne = space.mesh.n_elements
    local = np.zeros((ne, space.ndof_local), dtype=p.dtype)
    for q in range(rule.points.shape[0]):
        x = a + J @ ref[q]
        inside = functional.contains(x[:, 0], x[:, 1]).astype(p.dtype)
        local += ((w[q] * det) * inside)[:, None] * phi[q][None, :]

    out = np.zeros(space.n_dofs, dtype=p.dtype)
    np.add.at(out, space.element_dof_map.ravel(), local.ravel())
    return round_to(inv_area * out, p)


def apply_dirichlet(A, rhs, bdofs):
    """Symmetric elimination for homogeneous Dirichlet conditions.

    Boundary rows and columns are zeroed, the boundary diagonal is set to 1
    and the boundary rhs entries to 0; the system stays symmetric positive
    definite.
    """
    n = A.shape[0]
    bdofs = np.asarray(bdofs, dtype=np.int64)
    if bdofs.size and (bdofs.min() < 0 or bdofs.max() >= n):
        raise IndexError("boundary dof out of range")
    bmask = np.zeros(n, dtype=bool)
    bmask[bdofs] = True

    coo = A.tocoo()
    keep = ~(bmask[coo.row] | bmask[coo.col])
    rows = np.concatenate([coo.row[keep], bdofs])
    cols = np.concatenate([coo.col[keep], bdofs])
    vals = np.concatenate([coo.data[keep], np.ones(bdofs.size, dtype=A.dtype)])
    A2 = sparse.coo_matrix((vals, (rows, cols)), shape=A.shape).tocsr()
    A2.sum_duplicates()

    rhs2 = rhs.copy()
    rhs2[bdofs] = 0
    return A2, rhs2
