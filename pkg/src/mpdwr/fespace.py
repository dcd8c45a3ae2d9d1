"""Lagrange finite element spaces of degree 1 and 2 over a triangulation.

A space is parameterized by a :class:`~mpdwr.scalar.Precision`.  Two spaces
built on the same mesh at different precisions have bit-identical DoF maps;
only the arithmetic performed with basis values and coefficients differs.
Reference-element basis values and gradients are tabulated in double and
rounded to the space's precision at assembly time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh as meshmod
from .scalar import Precision, precision, round_to


# ---------------------------------------------------------------------------
# quadrature on the reference triangle (0,0)-(1,0)-(0,1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,) summing to the reference area 1/2
    exactness: int


def _orbit3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# Dunavant-type symmetric rules; weights are w.r.t. unit total and scaled
# by the reference area 1/2 in quadrature().
_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_orbit3(2 / 3, 1 / 6), [1 / 3] * 3),
    3: (
        _orbit6(0.659027622374092, 0.231933368553031, 0.109039009072877),
        [1 / 6] * 6,
    ),
    4: (
        _orbit3(0.108103018168070, 0.445948490915965)
        + _orbit3(0.816847572980459, 0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    5: (
        [(1 / 3, 1 / 3, 1 / 3)]
        + _orbit3(0.059715871789770, 0.470142064105115)
        + _orbit3(0.797426985353087, 0.101286507323456),
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3,
    ),
    6: (
        _orbit3(0.501426509658179, 0.249286745170910)
        + _orbit3(0.873821971016996, 0.063089014491502)
        + _orbit6(0.053145049844817, 0.310352451033784, 0.636502499121399),
        [0.116786275726379] * 3 + [0.050844906370207] * 3 + [0.082851075618374] * 6,
    ),
    8: (
        [(1 / 3, 1 / 3, 1 / 3)]
        + _orbit3(0.081414823414554, 0.459292588292723)
        + _orbit3(0.658861384496480, 0.170569307751760)
        + _orbit3(0.898905543365938, 0.050547228317031)
        + _orbit6(0.008394777409958, 0.263112829634638, 0.728492392955404),
        [0.144315607677787]
        + [0.095091634267285] * 3
        + [0.103217370534718] * 3
        + [0.032458497623198] * 3
        + [0.027230314174435] * 6,
    ),
}

ASSEMBLY_DEGREE = 4    # stiffness / load quadrature
EVALUATION_DEGREE = 8  # functionals, orthogonality probes, error norms


def quadrature(exactness_degree: int) -> QuadratureRule:
    """Symmetric Gauss rule on the reference triangle, weights sum to 1/2."""
    if exactness_degree not in _RULES:
        raise ValueError(
            f"unsupported quadrature degree {exactness_degree}; "
            f"available: {sorted(_RULES)}"
        )
    pts, w = _RULES[exactness_degree]
    return QuadratureRule(
        points=np.asarray(pts, dtype=np.float64),
        weights=0.5 * np.asarray(w, dtype=np.float64),
        exactness=exactness_degree,
    )


# ---------------------------------------------------------------------------
# reference basis tabulation (double precision)
# ---------------------------------------------------------------------------

def basis_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Nodal basis values at barycentric points; shape (nq, ndof_local)."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    if degree == 1:
        return np.stack([l0, l1, l2], axis=1)
    if degree == 2:
        return np.stack(
            [
                l0 * (2 * l0 - 1),
                l1 * (2 * l1 - 1),
                l2 * (2 * l2 - 1),
                4 * l0 * l1,  # edge (a, b)
                4 * l1 * l2,  # edge (b, c)
                4 * l2 * l0,  # edge (c, a)
            ],
            axis=1,
        )
    raise ValueError(f"degree must be 1 or 2, got {degree}")


def basis_gradients(degree: int, bary: np.ndarray) -> np.ndarray:
    """Reference gradients at barycentric points; shape (nq, ndof_local, 2)."""
    nq = bary.shape[0]
    if degree == 1:
        g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return np.broadcast_to(g, (nq, 3, 2)).copy()
    if degree == 2:
        l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
        g0 = np.array([-1.0, -1.0])
        g1 = np.array([1.0, 0.0])
        g2 = np.array([0.0, 1.0])
        out = np.empty((nq, 6, 2))
        out[:, 0] = np.outer(4 * l0 - 1, g0)
        out[:, 1] = np.outer(4 * l1 - 1, g1)
        out[:, 2] = np.outer(4 * l2 - 1, g2)
        out[:, 3] = 4 * (np.outer(l1, g0) + np.outer(l0, g1))
        out[:, 4] = 4 * (np.outer(l2, g1) + np.outer(l1, g2))
        out[:, 5] = 4 * (np.outer(l0, g2) + np.outer(l2, g0))
        return out
    raise ValueError(f"degree must be 1 or 2, got {degree}")


# ---------------------------------------------------------------------------
# spaces and discrete fields
# ---------------------------------------------------------------------------

@dataclass
class FESpace:
    mesh: meshmod.Mesh
    degree: int
    precision: Precision
    n_dofs: int
    dof_coords: np.ndarray       # (n_dofs, 2) float64
    boundary_dofs: np.ndarray    # sorted int64
    element_dof_map: np.ndarray  # (ne, ndof_local) int64

    @property
    def ndof_local(self):
        return self.element_dof_map.shape[1]


@dataclass
class Solution:
    space: FESpace
    coefficients: np.ndarray  # (n_dofs,) at space precision

    @property
    def precision(self):
        return self.space.precision


def build_space(m: meshmod.Mesh, degree: int, p) -> FESpace:
    """DoF numbering: vertices first, then (degree 2) edges sorted by
    endpoint indices.  Deterministic given the mesh; independent of p."""
    p = precision(p)
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    nv = m.n_vertices
    bvert = np.unique(m.boundary_edges)
    if degree == 1:
        return FESpace(
            mesh=m,
            degree=1,
            precision=p,
            n_dofs=nv,
            dof_coords=m.vertices.copy(),
            boundary_dofs=np.sort(bvert),
            element_dof_map=m.elements.copy(),
        )
    et = meshmod.edge_table(m)  # edges already sorted lexicographically
    mids = 0.5 * (m.vertices[et.edges[:, 0]] + m.vertices[et.edges[:, 1]])
    dof_map = np.concatenate([m.elements, nv + et.elem_to_edge], axis=1)
    bedge_ids = meshmod.edge_ids_of(et, m.boundary_edges)
    boundary = np.sort(np.concatenate([bvert, nv + bedge_ids]))
    return FESpace(
        mesh=m,
        degree=2,
        precision=p,
        n_dofs=nv + et.n_edges,
        dof_coords=np.vstack([m.vertices, mids]),
        boundary_dofs=boundary,
        element_dof_map=dof_map,
    )


def interpolate(space: FESpace, g) -> Solution:
    """Nodal interpolant: coefficients are g at the DoF points, rounded."""
    vals = np.asarray(g(space.dof_coords[:, 0], space.dof_coords[:, 1]), dtype=np.float64)
    vals = np.broadcast_to(vals, (space.n_dofs,))
    return Solution(space=space, coefficients=round_to(vals, space.precision))


def zero_solution(space: FESpace) -> Solution:
    return Solution(space, np.zeros(space.n_dofs, dtype=space.precision.dtype))


def eval(u: Solution, points):  # noqa: A001 - spec operation name
    """Evaluate u at physical points (scalar pair or (np, 2) array).

    Points are located by a barycentric scan over all elements; raises
    ValueError for points outside the closed domain.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m = u.space.mesh
    v = m.vertices[m.elements]  # (ne, 3, 2)
    a = v[:, 0]
    d1 = v[:, 1] - a
    d2 = v[:, 2] - a
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    out = np.empty(pts.shape[0], dtype=u.space.precision.dtype)
    coeffs = u.coefficients
    for i, xy in enumerate(pts):
        r = xy - a
        lam1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        lam2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        lam0 = 1.0 - lam1 - lam2
        score = np.minimum(np.minimum(lam0, lam1), lam2)
        e = int(np.argmax(score))
        if score[e] < -1e-9:
            raise ValueError(f"point {tuple(xy)} lies outside the domain")
        bary = np.array([[lam0[e], lam1[e], lam2[e]]])
        phi = round_to(basis_values(u.space.degree, bary)[0], u.space.precision)
        local = coeffs[u.space.element_dof_map[e]]
        acc = u.space.precision.dtype.type(0.0)
        for j in range(phi.shape[0]):
            acc = u.space.precision.dtype.type(acc + phi[j] * local[j])
        out[i] = acc
    if np.ndim(points) == 1:
        return out[0]
    return out


# ---------------------------------------------------------------------------
# shared quadrature-evaluation helpers (double precision diagnostics)
# ---------------------------------------------------------------------------

def element_transforms(m: meshmod.Mesh):
    """Affine maps ref -> phys in double: origins, J, detJ, inv(J)^T."""
    v = m.vertices[m.elements]
    a = v[:, 0]
    J = np.stack([v[:, 1] - a, v[:, 2] - a], axis=2)  # (ne, 2, 2), columns
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1]
    invJT[:, 0, 1] = -J[:, 1, 0]
    invJT[:, 1, 0] = -J[:, 0, 1]
    invJT[:, 1, 1] = J[:, 0, 0]
    invJT /= det[:, None, None]
    return a, J, det, invJT


def quad_points_physical(m: meshmod.Mesh, rule: QuadratureRule):
    """Physical quadrature points (ne, nq, 2) and weights*detJ (ne, nq)."""
    a, J, det, _ = element_transforms(m)
    ref = rule.points[:, 1:]  # (nq, 2) reference coordinates
    pts = a[:, None, :] + np.einsum("eij,qj->eqi", J, ref)
    wdet = rule.weights[None, :] * det[:, None]
    return pts, wdet


def solution_values(u: Solution, rule: QuadratureRule) -> np.ndarray:
    """u at the quadrature points of every element, in double; (ne, nq)."""
    phi = basis_values(u.space.degree, rule.points)  # (nq, nloc)
    local = u.coefficients.astype(np.float64)[u.space.element_dof_map]  # (ne, nloc)
    return local @ phi.T


def solution_gradients(u: Solution, rule: QuadratureRule) -> np.ndarray:
    """grad u at quadrature points, in double; (ne, nq, 2)."""
    _, _, _, invJT = element_transforms(u.space.mesh)
    gref = basis_gradients(u.space.degree, rule.points)  # (nq, nloc, 2)
    gphys = np.einsum("eab,qib->eqia", invJT, gref)      # (ne, nq, nloc, 2)
    local = u.coefficients.astype(np.float64)[u.space.element_dof_map]
    return np.einsum("eqia,ei->eqa", gphys, local)


def l2_error(u: Solution, exact) -> float:
    """Elementwise degree-8 L2 norm of (exact - u), computed in double."""
    rule = quadrature(EVALUATION_DEGREE)
    pts, wdet = quad_points_physical(u.space.mesh, rule)
    diff = np.asarray(exact(pts[..., 0], pts[..., 1]), dtype=np.float64)
    diff = diff - solution_values(u, rule)
    return float(np.sqrt(np.sum(wdet * diff**2)))


def l2_norm_field(m: meshmod.Mesh, g) -> float:
    rule = quadrature(EVALUATION_DEGREE)
    pts, wdet = quad_points_physical(m, rule)
    vals = np.asarray(g(pts[..., 0], pts[..., 1]), dtype=np.float64)
    return float(np.sqrt(np.sum(wdet * vals**2)))


def save_solution_text(u: Solution, path):
    """Plain-text export: header 'n_dofs precision', one coefficient/line."""
    with open(path, "w") as fh:
        fh.write(f"{u.space.n_dofs} {u.space.precision.name}\n")
        for c in u.coefficients:
            fh.write(f"{float(c)!r}\n")
