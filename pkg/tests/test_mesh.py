import numpy as np
import pytest

from mpdwr.mesh import (
    Mesh,
    bisect_marked,
    check_conforming,
    edge_table,
    element_areas,
    element_diameters,
    global_refine,
    min_angle,
    min_element_volume,
    save_mesh_text,
    unit_square_template,
)


def two_triangle_square(diagonal_tags=True):
    """Unit square split along the diagonal (0,0)-(1,1).

    With diagonal_tags both refinement edges are the shared diagonal
    (compatible); otherwise element 1's refinement edge is the top
    boundary edge, which forces a closure cascade.
    """
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    if diagonal_tags:
        elements = np.array([[2, 0, 1], [0, 2, 3]])
    else:
        elements = np.array([[2, 0, 1], [2, 3, 0]])
    return Mesh(
        vertices=vertices,
        elements=np.asarray(elements, dtype=np.int64),
        boundary_edges=np.array([[0, 1], [1, 2], [2, 3], [3, 0]], dtype=np.int64),
        generation=np.zeros(2, dtype=np.int32),
        domain_area=1.0,
    )


def count_edges(mesh):
    """Independent edge count by hashing sorted vertex pairs."""
    seen = set()
    for a, b, c in mesh.elements.tolist():
        for e in ((a, b), (b, c), (c, a)):
            seen.add(tuple(sorted(e)))
    return len(seen)


def test_template_counts():
    m = unit_square_template()
    assert m.n_elements == 64
    assert m.n_vertices == 41
    # Euler: V - E + F = 2 with the outer face
    E = count_edges(m)
    assert m.n_vertices - E + (m.n_elements + 1) == 2


def test_template_area_and_conformity():
    m = unit_square_template()
    assert abs(element_areas(m).sum() - 4.0) <= 1e-12 * 4.0
    assert check_conforming(m)


def test_template_is_right_isosceles():
    m = unit_square_template()
    assert abs(np.degrees(min_angle(m)) - 45.0) < 1e-10


def test_min_element_volume_template():
    assert min_element_volume(unit_square_template()) == pytest.approx(0.0625)


def test_min_element_volume_after_refine():
    m = global_refine(unit_square_template())
    assert min_element_volume(m) == pytest.approx(0.015625)


def test_global_refine_two_triangle_square():
    m = global_refine(two_triangle_square())
    assert m.n_elements == 8
    assert m.n_vertices == 9
    check_conforming(m)


def test_global_refine_vertex_law():
    m = unit_square_template()
    for _ in range(2):
        E = count_edges(m)
        refined = global_refine(m)
        assert refined.n_vertices == m.n_vertices + E
        assert refined.n_elements == 4 * m.n_elements
        m = refined


def test_bisect_empty_marking_is_identity():
    m = unit_square_template()
    assert bisect_marked(m, []) is m


def test_bisect_one_of_two_with_incompatible_tags():
    m = two_triangle_square(diagonal_tags=False)
    out = bisect_marked(m, [0])
    assert 5 <= out.n_elements <= 6
    check_conforming(out)


def test_bisect_one_of_two_with_compatible_tags():
    m = two_triangle_square(diagonal_tags=True)
    out = bisect_marked(m, [0])
    assert out.n_elements == 4
    assert out.n_vertices == 5
    check_conforming(out)


def test_bisect_marked_out_of_range():
    with pytest.raises(IndexError):
        bisect_marked(unit_square_template(), [64])


def test_nvb_angle_bound_random_rounds():
    m = unit_square_template()
    floor = min_angle(m) / 2.0
    rng = np.random.default_rng(3)
    for _ in range(10):
        marked = rng.choice(m.n_elements, size=max(1, m.n_elements // 5), replace=False)
        m = bisect_marked(m, marked)
        check_conforming(m)
        assert min_angle(m) >= floor
    # criss-cross template: NVB keeps every element right-isosceles
    assert abs(np.degrees(min_angle(m)) - 45.0) < 1e-9


def test_deep_bisection_generations():
    m = unit_square_template()
    out = bisect_marked(m, [0], generations=5)
    check_conforming(out)
    assert min_element_volume(out) <= 0.0625 / 2**5 + 1e-15


def test_refinement_monotonicity_and_area():
    m = unit_square_template()
    rng = np.random.default_rng(11)
    for _ in range(5):
        marked = rng.choice(m.n_elements, size=3, replace=False)
        out = bisect_marked(m, marked)
        assert out.n_elements > m.n_elements
        assert abs(element_areas(out).sum() - 4.0) <= 1e-12 * 4.0
        m = out


def test_generation_tracking():
    m = unit_square_template()
    out = bisect_marked(m, [0])
    assert out.generation.max() >= 1
    assert out.generation.min() == 0


def test_diameters_bound_edges():
    m = global_refine(unit_square_template())
    et = edge_table(m)
    hK = element_diameters(m)
    for e in range(m.n_elements):
        v = m.vertices[m.elements[e]]
        for k in range(3):
            hE = np.linalg.norm(v[(k + 1) % 3] - v[k])
            assert hK[e] >= hE - 1e-15


def test_edge_table_incidence():
    m = global_refine(unit_square_template())
    et = edge_table(m)
    counts = (et.edge_to_elem >= 0).sum(axis=1)
    assert set(counts.tolist()) == {1, 2}
    assert (counts == 1).sum() == m.boundary_edges.shape[0]


def test_mesh_text_export(tmp_path):
    m = unit_square_template()
    path = tmp_path / "mesh.txt"
    save_mesh_text(m, path)
    lines = path.read_text().splitlines()
    nv, ne, nb = map(int, lines[0].split())
    assert (nv, ne, nb) == (41, 64, 16)
    assert len(lines) == 1 + nv + ne + nb
    x, y = map(float, lines[1].split())
    assert (x, y) == (-1.0, -1.0)


def test_element_patches_contain_self_and_neighbors():
    from mpdwr.mesh import element_patches

    m = global_refine(unit_square_template())
    et = edge_table(m)
    patches = element_patches(m)
    for e, patch in enumerate(patches):
        assert e in patch
        n_interior = int(((et.edge_to_elem[et.elem_to_edge[e]] >= 0).all(axis=1)).sum())
        assert len(patch) == 1 + n_interior


def test_deep_protocol_minvol_trend():
    # aggressive multi-generation rounds shrink the minimum volume by
    # orders of magnitude at modest element counts
    import numpy as np

    from mpdwr.driver import initial_mesh, marking, solve_primal
    from mpdwr.estimator import residual_indicator
    from mpdwr.problems import get_problem

    prob = get_problem("e2")
    m = initial_mesh(2)
    v0 = min_element_volume(m)
    for _ in range(7):
        u, _ = solve_primal(m, prob, "double", tol=1e-5)
        ind = residual_indicator(u, prob.f)
        m = bisect_marked(m, marking(ind, 0.3), generations=4)
    check_conforming(m)
    assert min_element_volume(m) <= 2e-5
    assert v0 / min_element_volume(m) >= 10**2.3
