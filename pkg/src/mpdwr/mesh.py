"""Conforming triangulations of polygonal domains.

A :class:`Mesh` stores double-precision geometry regardless of the working
precision of any finite element space built on top of it; only field
coefficients and assembly arithmetic carry a lower precision.

Element convention: ``elements[e] = (a, b, c)`` is counterclockwise, the
refinement edge is ``(a, b)`` and ``c`` is the peak (newest vertex).  Local
edges are ordered ``(a,b), (b,c), (c,a)``.  Newest-vertex bisection inserts
the midpoint of the refinement edge as the peak of both children and hands
the two remaining parent edges down as the children's refinement edges,
which keeps the number of similarity classes finite (shape regularity) and,
with the criss-cross template below, keeps every element right-isosceles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Mesh:
    vertices: np.ndarray        # (nv, 2) float64
    elements: np.ndarray        # (ne, 3) int64, CCW, refinement edge (a, b)
    boundary_edges: np.ndarray  # (nb, 2) int64, Dirichlet
    generation: np.ndarray      # (ne,) int32 refinement depth
    domain_area: float = 4.0

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]


@dataclass
class EdgeTable:
    """Unique-edge topology derived from a mesh.

    ``edges`` holds each undirected edge once as a sorted vertex pair.
    ``elem_to_edge[e, k]`` is the edge id of local edge k of element e and
    ``edge_to_elem`` maps each edge to its one or two incident elements
    (-1 padding on boundary edges).
    """

    edges: np.ndarray          # (nE, 2) int64, sorted pairs
    elem_to_edge: np.ndarray   # (ne, 3) int64
    edge_to_elem: np.ndarray   # (nE, 2) int64, -1 = no neighbor
    edge_local: np.ndarray     # (nE, 2) int64, local edge index within element

    @property
    def n_edges(self):
        return self.edges.shape[0]


def edge_table(mesh: Mesh) -> EdgeTable:
    elems = mesh.elements
    ne = elems.shape[0]
    # local edges (a,b), (b,c), (c,a)
    raw = np.stack(
        [elems[:, [0, 1]], elems[:, [1, 2]], elems[:, [2, 0]]], axis=1
    ).reshape(-1, 2)
    undirected = np.sort(raw, axis=1)
    edges, inverse = np.unique(undirected, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    elem_to_edge = inverse.reshape(ne, 3)

    # group the 3*ne incidences by edge id; within a group the original
    # element order is kept (stable), so slot 0 is the lower element index
    order = np.argsort(inverse, kind="stable")
    eids = inverse[order]
    counts = np.bincount(eids, minlength=edges.shape[0])
    if counts.max(initial=0) > 2:
        raise ValueError("edge shared by more than two elements")
    first = np.ones(eids.shape[0], dtype=bool)
    first[1:] = eids[1:] != eids[:-1]
    slot = np.where(first, 0, 1)

    elem_ids = np.repeat(np.arange(ne, dtype=np.int64), 3)[order]
    local_ids = np.tile(np.arange(3, dtype=np.int64), ne)[order]
    edge_to_elem = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    edge_local = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    edge_to_elem[eids, slot] = elem_ids
    edge_local[eids, slot] = local_ids
    return EdgeTable(edges, elem_to_edge, edge_to_elem, edge_local)


def edge_ids_of(et: EdgeTable, pairs) -> np.ndarray:
    """Edge ids of vertex pairs (any orientation) via lexicographic search."""
    pairs = np.sort(np.asarray(pairs, dtype=np.int64), axis=1)
    base = int(max(et.edges.max(), pairs.max())) + 1
    enc = et.edges[:, 0] * base + et.edges[:, 1]
    keys = pairs[:, 0] * base + pairs[:, 1]
    idx = np.searchsorted(enc, keys)
    if (idx >= enc.shape[0]).any() or (enc[np.minimum(idx, enc.shape[0] - 1)] != keys).any():
        raise KeyError("vertex pair is not an edge of the mesh")
    return idx


def signed_areas(mesh: Mesh) -> np.ndarray:
    v = mesh.vertices[mesh.elements]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def element_areas(mesh: Mesh) -> np.ndarray:
    return np.abs(signed_areas(mesh))


def element_diameters(mesh: Mesh) -> np.ndarray:
    """Longest edge per element."""
    v = mesh.vertices[mesh.elements]
    l0 = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
    l1 = np.linalg.norm(v[:, 2] - v[:, 1], axis=1)
    l2 = np.linalg.norm(v[:, 0] - v[:, 2], axis=1)
    return np.maximum(np.maximum(l0, l1), l2)


def min_element_volume(mesh: Mesh) -> float:
    """Smallest element area; the working-precision breakdown monitor."""
    return float(element_areas(mesh).min())


def element_patches(mesh: Mesh) -> list:
    """Neighbor patches: for each element, itself plus its edge neighbors."""
    et = edge_table(mesh)
    patches = [[e] for e in range(mesh.n_elements)]
    interior = (et.edge_to_elem >= 0).all(axis=1)
    for left, right in et.edge_to_elem[interior]:
        patches[left].append(int(right))
        patches[right].append(int(left))
    return [sorted(set(p)) for p in patches]


def min_angle(mesh: Mesh) -> float:
    """Smallest interior angle over all elements, in radians."""
    v = mesh.vertices[mesh.elements]
    angles = []
    for k in range(3):
        d1 = v[:, (k + 1) % 3] - v[:, k]
        d2 = v[:, (k + 2) % 3] - v[:, k]
        cosang = (d1 * d2).sum(axis=1) / (
            np.linalg.norm(d1, axis=1) * np.linalg.norm(d2, axis=1)
        )
        angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return float(np.min(angles))


def check_conforming(mesh: Mesh, rel_tol=1e-12):
    """Verify triangulation conditions: orientation, cover, conformity.

    Conformity is tested by edge-incidence counting: every interior edge is
    shared by exactly two elements and every boundary edge by exactly one,
    which rules out hanging nodes on meshes produced by refinement.
    Raises AssertionError with a description on the first violation.
    """
    sa = signed_areas(mesh)
    assert np.all(sa > 0), "element with non-positive signed area"

    total = float(np.abs(sa).sum())
    assert abs(total - mesh.domain_area) <= rel_tol * mesh.domain_area, (
        f"area sum {total} != domain area {mesh.domain_area}"
    )

    et = edge_table(mesh)
    counts = (et.edge_to_elem >= 0).sum(axis=1)
    assert set(np.unique(counts).tolist()) <= {1, 2}, "bad edge incidence"
    beids = edge_ids_of(et, mesh.boundary_edges)
    assert np.unique(beids).shape[0] == mesh.boundary_edges.shape[0], (
        "duplicate boundary edges"
    )
    assert (counts[beids] == 1).all(), "boundary edge shared by two elements"
    assert int((counts == 1).sum()) == mesh.boundary_edges.shape[0], (
        "interior-looking edge with one element"
    )

    uniq = np.unique(mesh.vertices, axis=0)
    assert uniq.shape[0] == mesh.n_vertices, "duplicate vertices"
    return True


def unit_square_template() -> Mesh:
    """Criss-cross template of [-1,1]^2: 4x4 cells, 4 triangles each.

    64 right-isosceles elements, 41 vertices.  Every refinement edge is the
    hypotenuse (the cell edge), so newest-vertex bisection reproduces
    right-isosceles triangles forever and the minimum angle stays at 45
    degrees.
    """
    n = 4
    xs = np.linspace(-1.0, 1.0, n + 1)
    grid = np.array([[x, y] for y in xs for x in xs])  # row-major, (n+1)^2
    centers = np.array(
        [
            [0.5 * (xs[i] + xs[i + 1]), 0.5 * (xs[j] + xs[j + 1])]
            for j in range(n)
            for i in range(n)
        ]
    )
    vertices = np.vstack([grid, centers])

    def gid(i, j):
        return j * (n + 1) + i

    elements = []
    bedges = []
    for j in range(n):
        for i in range(n):
            c = (n + 1) ** 2 + j * n + i
            p00, p10 = gid(i, j), gid(i + 1, j)
            p11, p01 = gid(i + 1, j + 1), gid(i, j + 1)
            elements += [[p00, p10, c], [p10, p11, c], [p11, p01, c], [p01, p00, c]]
            if j == 0:
                bedges.append([p00, p10])
            if i == n - 1:
                bedges.append([p10, p11])
            if j == n - 1:
                bedges.append([p11, p01])
            if i == 0:
                bedges.append([p01, p00])
    return Mesh(
        vertices=vertices,
        elements=np.asarray(elements, dtype=np.int64),
        boundary_edges=np.asarray(bedges, dtype=np.int64),
        generation=np.zeros(len(elements), dtype=np.int32),
        domain_area=4.0,
    )


def global_refine(mesh: Mesh) -> Mesh:
    """Regular (red) refinement: each triangle splits into 4 via midpoints.

    Vertex numbering keeps the parent vertices first and appends one
    midpoint per parent edge, so coarse-mesh nodal values embed as the
    leading block of the refined numbering.
    """
    et = edge_table(mesh)
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[et.edges[:, 0]] + mesh.vertices[et.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    a, b, c = mesh.elements[:, 0], mesh.elements[:, 1], mesh.elements[:, 2]
    mab = nv + et.elem_to_edge[:, 0]
    mbc = nv + et.elem_to_edge[:, 1]
    mca = nv + et.elem_to_edge[:, 2]
    # corner children keep the parent's hypotenuse halves as refinement
    # edges; the center child's refinement edge is (mbc, mca)
    children = np.concatenate(
        [
            np.stack([a, mab, mca], axis=1),
            np.stack([mab, b, mbc], axis=1),
            np.stack([mca, mbc, c], axis=1),
            np.stack([mbc, mca, mab], axis=1),
        ]
    )
    generation = np.tile(mesh.generation + 1, 4)

    bids = nv + edge_ids_of(et, mesh.boundary_edges)
    i, j = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    bedges = np.concatenate(
        [np.stack([i, bids], axis=1), np.stack([bids, j], axis=1)]
    )
    return Mesh(
        vertices=vertices,
        elements=children,
        boundary_edges=bedges,
        generation=generation,
        domain_area=mesh.domain_area,
    )


def bisect_marked(mesh: Mesh, marked, generations: int = 1) -> Mesh:
    """Newest-vertex bisection of the marked elements plus conformity closure.

    Marked refinement edges form the initial cut set; the closure repeatedly
    adds the refinement edge of any element touching a cut edge (bisection
    can only start there), so the cut set agrees across neighbors and the
    result has no hanging nodes.  Each element is bisected at most twice
    per pass (once at the refinement edge, then children at cut parent
    edges).  With generations > 1 the descendants of the marked set are
    re-bisected that many times, so a marked element's volume shrinks by
    at least 2^-generations; deep-refinement studies use this to reproduce
    minimal volumes that drop several orders of magnitude per round.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_elements:
        raise IndexError("marked element index out of range")
    out, parents = _bisect_once(mesh, marked)
    for _ in range(generations - 1):
        in_lineage = np.zeros(mesh.n_elements, dtype=bool)
        in_lineage[marked] = True
        marked = np.nonzero(in_lineage[parents])[0]
        mesh = out
        out, parents = _bisect_once(mesh, marked)
    return out


def _bisect_once(mesh: Mesh, marked):
    """One bisection pass; returns (new mesh, parent element per new element)."""

    et = edge_table(mesh)
    cut = np.zeros(et.n_edges, dtype=bool)
    cut[et.elem_to_edge[marked, 0]] = True
    while True:
        has_cut = cut[et.elem_to_edge].any(axis=1)
        need = et.elem_to_edge[has_cut, 0]
        grown = np.count_nonzero(cut)
        cut[need] = True
        if np.count_nonzero(cut) == grown:
            break

    cut_ids = np.nonzero(cut)[0]
    nv = mesh.n_vertices
    new_vertex = np.full(et.n_edges, -1, dtype=np.int64)
    new_vertex[cut_ids] = nv + np.arange(cut_ids.size)
    mids = 0.5 * (mesh.vertices[et.edges[cut_ids, 0]] + mesh.vertices[et.edges[cut_ids, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    elems_out = []
    gens_out = []
    parents_out = []
    all_ids = np.arange(mesh.n_elements, dtype=np.int64)
    a, b, c = mesh.elements[:, 0], mesh.elements[:, 1], mesh.elements[:, 2]
    c0 = cut[et.elem_to_edge[:, 0]]
    c1 = cut[et.elem_to_edge[:, 1]]
    c2 = cut[et.elem_to_edge[:, 2]]
    gen = mesh.generation

    keep = ~c0
    elems_out.append(mesh.elements[keep])
    gens_out.append(gen[keep])
    parents_out.append(all_ids[keep])

    m0 = new_vertex[et.elem_to_edge[:, 0]]
    m1 = new_vertex[et.elem_to_edge[:, 1]]
    m2 = new_vertex[et.elem_to_edge[:, 2]]

    # child over (c, a): refinement edge (c, a), peak m0
    sel = c0 & ~c2
    elems_out.append(np.stack([c[sel], a[sel], m0[sel]], axis=1))
    gens_out.append(gen[sel] + 1)
    parents_out.append(all_ids[sel])
    sel = c0 & c2  # grandchildren, split child at midpoint of (c, a)
    elems_out.append(np.stack([m0[sel], c[sel], m2[sel]], axis=1))
    gens_out.append(gen[sel] + 2)
    parents_out.append(all_ids[sel])
    elems_out.append(np.stack([a[sel], m0[sel], m2[sel]], axis=1))
    gens_out.append(gen[sel] + 2)
    parents_out.append(all_ids[sel])

    # child over (b, c): refinement edge (b, c), peak m0
    sel = c0 & ~c1
    elems_out.append(np.stack([b[sel], c[sel], m0[sel]], axis=1))
    gens_out.append(gen[sel] + 1)
    parents_out.append(all_ids[sel])
    sel = c0 & c1
    elems_out.append(np.stack([m0[sel], b[sel], m1[sel]], axis=1))
    gens_out.append(gen[sel] + 2)
    parents_out.append(all_ids[sel])
    elems_out.append(np.stack([c[sel], m0[sel], m1[sel]], axis=1))
    gens_out.append(gen[sel] + 2)
    parents_out.append(all_ids[sel])

    beids = edge_ids_of(et, mesh.boundary_edges)
    bcut = cut[beids]
    i, j = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    mids_b = new_vertex[beids[bcut]]
    bedges = np.concatenate(
        [
            mesh.boundary_edges[~bcut],
            np.stack([i[bcut], mids_b], axis=1),
            np.stack([mids_b, j[bcut]], axis=1),
        ]
    )

    out = Mesh(
        vertices=vertices,
        elements=np.concatenate(elems_out),
        boundary_edges=bedges,
        generation=np.concatenate(gens_out).astype(np.int32),
        domain_area=mesh.domain_area,
    )
    return out, np.concatenate(parents_out)


def save_mesh_text(mesh: Mesh, path):
    """Plain-text export: header 'nv ne nb', vertices, elements, edges."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements} {mesh.boundary_edges.shape[0]}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.elements:
            fh.write(f"{i} {j} {k}\n")
        for i, j in mesh.boundary_edges:
            fh.write(f"{i} {j}\n")
