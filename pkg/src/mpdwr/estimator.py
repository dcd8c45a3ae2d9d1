"""Residual indicator, Galerkin-orthogonality probes, and the DWR indicator.

Indicator and goal-estimate arithmetic runs in double after promoting
solution coefficients: the indicators steer the mesh, and carrying them at
a lower precision would conflate the deliberate primal/dual precision
split with incidental estimator rounding.  The one exception is
galerkin_probe, whose whole point is to expose the rounding of the space
being probed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh as meshmod
from .fespace import (
    ASSEMBLY_DEGREE,
    EVALUATION_DEGREE,
    Solution,
    basis_gradients,
    basis_values,
    quad_points_physical,
    quadrature,
    solution_gradients,
    solution_values,
)
from .scalar import round_to

# 2-point Gauss weights on [0, 1] for edge integrals (the points are
# immaterial for piecewise-constant integrands)
_EDGE_GAUSS_W = np.array([0.5, 0.5])


@dataclass
class IndicatorField:
    mesh: meshmod.Mesh
    values: np.ndarray  # (ne,) nonnegative float64

    @property
    def total(self) -> float:
        return float(np.sqrt(np.sum(self.values**2)))


def _element_mean_f(u: Solution, f):
    """Element averages of f with the assembly rule, and element areas."""
    rule = quadrature(ASSEMBLY_DEGREE)
    pts, wdet = quad_points_physical(u.space.mesh, rule)
    fvals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=np.float64)
    areas = wdet.sum(axis=1)
    return (wdet * fvals).sum(axis=1) / areas, areas


def residual_indicator(u_h: Solution, f) -> IndicatorField:
    """Classic elementwise residual indicator for a degree-1 solution.

    eta_K^2 = h_K^2 |K| fbar_K^2 + 1/2 sum_E h_E int_E [n . grad u_h]^2,
    summed over the interior edges of K.  The Laplacian term vanishes for
    piecewise linears, leaving the element mean fbar_K; edge integrals use
    2-point Gauss along each edge.
    """
    if u_h.space.degree != 1:
        raise ValueError("residual indicator requires a degree-1 solution")
    m = u_h.space.mesh
    fbar, areas = _element_mean_f(u_h, f)
    hK = meshmod.element_diameters(m)
    eta_sq = hK**2 * fbar**2 * areas

    grads = solution_gradients(u_h, quadrature(1))[:, 0, :]  # constant per element
    et = meshmod.edge_table(m)
    interior = (et.edge_to_elem >= 0).all(axis=1)
    eL = et.edge_to_elem[interior, 0]
    eR = et.edge_to_elem[interior, 1]
    va = m.vertices[et.edges[interior, 0]]
    vb = m.vertices[et.edges[interior, 1]]
    tang = vb - va
    hE = np.linalg.norm(tang, axis=1)
    normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1) / hE[:, None]

    jump = ((grads[eL] - grads[eR]) * normal).sum(axis=1)
    # int_E jump^2 ds by 2-point Gauss; the integrand is constant for P1
    # but the quadrature is kept explicit
    jump_sq_int = hE * (_EDGE_GAUSS_W[None, :] * jump[:, None] ** 2).sum(axis=1)
    contrib = 0.5 * hE * jump_sq_int
    np.add.at(eta_sq, eL, contrib)
    np.add.at(eta_sq, eR, contrib)
    return IndicatorField(mesh=m, values=np.sqrt(eta_sq))


def _check_same_mesh(u: Solution, v: Solution):
    if u.space.mesh is not v.space.mesh and not (
        np.array_equal(u.space.mesh.vertices, v.space.mesh.vertices)
        and np.array_equal(u.space.mesh.elements, v.space.mesh.elements)
    ):
        raise ValueError("solutions live on different meshes")


def _residual_pairing(u_h: Solution, v_h: Solution, f) -> float:
    """(f, v_h) - a(u_h, v_h) in double with degree-8 quadrature."""
    _check_same_mesh(u_h, v_h)
    rule = quadrature(EVALUATION_DEGREE)
    m = u_h.space.mesh
    pts, wdet = quad_points_physical(m, rule)
    fv = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=np.float64)
    load_term = np.sum(wdet * fv * solution_values(v_h, rule))
    gu = solution_gradients(u_h, rule)
    gv = solution_gradients(v_h, rule)
    energy_term = np.sum(wdet * (gu * gv).sum(axis=2))
    return float(load_term - energy_term)


def galerkin_probe(u_h: Solution, v_h: Solution, f) -> float:
    """a(u - u_h, v_h) evaluated as (f, v_h) - a(u_h, v_h).

    The exact solution enters through f: v_h vanishes on the boundary, so
    (f, v_h) = a(u, v_h).  Both pairing integrals run through the space
    that owns v_h, i.e. geometry, basis tables and the element-by-element
    accumulation are carried at v_h's precision before the difference is
    formed in double.  Probing with a double solution against itself
    yields the quadrature-plus-solver floor, which decays under
    refinement; probing the single-precision solution from a double one
    keeps the accumulated single rounding of two large near-cancelling
    integrals and does not converge to zero.
    """
    _check_same_mesh(u_h, v_h)
    p = v_h.space.precision
    rule = quadrature(EVALUATION_DEGREE)
    mesh = v_h.space.mesh

    verts = round_to(mesh.vertices, p)
    tri = verts[mesh.elements]
    origin = tri[:, 0]
    J = np.stack([tri[:, 1] - origin, tri[:, 2] - origin], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1]
    invJT[:, 0, 1] = -J[:, 1, 0]
    invJT[:, 1, 0] = -J[:, 0, 1]
    invJT[:, 1, 1] = J[:, 0, 0]
    invJT = invJT / det[:, None, None]

    phi = round_to(basis_values(v_h.space.degree, rule.points), p)
    gref_u = round_to(basis_gradients(u_h.space.degree, rule.points), p)
    gref_v = round_to(basis_gradients(v_h.space.degree, rule.points), p)
    w = round_to(rule.weights, p)
    ref = round_to(rule.points[:, 1:], p)
    cu = round_to(u_h.coefficients.astype(np.float64), p)[u_h.space.element_dof_map]
    cv = round_to(v_h.coefficients.astype(np.float64), p)[v_h.space.element_dof_map]

    ne = mesh.n_elements
    load = np.zeros(ne, dtype=p.dtype)
    energy = np.zeros(ne, dtype=p.dtype)
    for q in range(rule.points.shape[0]):
        x = origin + J @ ref[q]
        fq = round_to(np.asarray(f(x[:, 0], x[:, 1])), p)
        vq = cv @ phi[q]
        load += (w[q] * det) * fq * vq
        gu = np.einsum("eab,ib->eia", invJT, gref_u[q])
        gv = np.einsum("eab,ib->eia", invJT, gref_v[q])
        du = np.einsum("eia,ei->ea", gu, cu)
        dv = np.einsum("eia,ei->ea", gv, cv)
        energy += (w[q] * det) * (du * dv).sum(axis=1)
    # sequential reduction at p: the accumulation noise of the probing
    # space is the quantity of interest
    load_term = float(np.cumsum(load)[-1])
    energy_term = float(np.cumsum(energy)[-1])
    return load_term - energy_term


def estimate_Je(u_h: Solution, w: Solution, f) -> float:
    """Goal-error estimate (f, w) - a(u_h, w) with the dual weight w.

    Degenerate same-precision pairs return solver-noise-level values, the
    failure mode the precision split exists to avoid.
    """
    _check_same_mesh(u_h, w)
    return _residual_pairing(u_h, w, f)


def element_l2_norms(w: Solution) -> np.ndarray:
    """||w||_{L2(K)} per element, in double."""
    rule = quadrature(ASSEMBLY_DEGREE)
    _, wdet = quad_points_physical(w.space.mesh, rule)
    vals = solution_values(w, rule)
    return np.sqrt(np.sum(wdet * vals**2, axis=1))


def element_h1_seminorms(w: Solution) -> np.ndarray:
    """||grad w||_{L2(K)} per element, in double."""
    rule = quadrature(ASSEMBLY_DEGREE)
    _, wdet = quad_points_physical(w.space.mesh, rule)
    g = solution_gradients(w, rule)
    return np.sqrt(np.sum(wdet * (g**2).sum(axis=2), axis=1))


def dwr_indicator(res: IndicatorField, w: Solution, weight: str = "value") -> IndicatorField:
    """Dual-weighted indicator: eta_K multiplied by a local dual weight.

    weight="value" pairs eta_K with ||w||_{L2(K)}, the literal local split
    of the residual-times-weight bound.  weight="gradient" pairs it with
    ||grad w||_{L2(K)}, the energy-pairing split of J(e) = a(u - u_h, w);
    the gradient weight concentrates at the corners of the functional
    region where the dual is least regular and steers goal-oriented
    refinement markedly better, so the adaptive driver uses it.
    """
    if res.mesh is not w.space.mesh and not (
        np.array_equal(res.mesh.vertices, w.space.mesh.vertices)
        and np.array_equal(res.mesh.elements, w.space.mesh.elements)
    ):
        raise ValueError("indicator and dual weight live on different meshes")
    if weight == "value":
        wgt = element_l2_norms(w)
    elif weight == "gradient":
        wgt = element_h1_seminorms(w)
    else:
        raise ValueError(f"unknown weight {weight!r}; expected 'value' or 'gradient'")
    return IndicatorField(mesh=res.mesh, values=res.values * wgt)
