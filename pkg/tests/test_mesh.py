import math

import numpy as np
import pytest

from conftest import corner_split_mesh, split_bottom_mesh
from stingstokes.mesh import (
    Mesh,
    MeshError,
    VertexClass,
    check_structure,
    classify_vertices,
    generate_crisscross,
    read_mesh,
    vertex_patch,
    write_mesh,
)


@pytest.mark.parametrize("N", [2, 3, 4, 8])
def test_crisscross_counts(N):
    m = generate_crisscross(N)
    assert m.n_vertices == (N + 1) ** 2 + N**2
    assert m.n_triangles == 4 * N * N
    assert m.n_edges == 2 * N * (N + 1) + 4 * N * N
    assert m.boundary_edge.sum() == 4 * N
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(m.signed_areas > 0)
    assert m.corners == frozenset({0, N, N * (N + 1), (N + 1) ** 2 - 1})


def test_crisscross_rejects_bad_arguments():
    with pytest.raises(MeshError):
        generate_crisscross(1)
    with pytest.raises(MeshError):
        generate_crisscross(4, perturbation=1.5)


def test_crisscross_classification_centers_only():
    for N in (2, 4, 8):
        m = generate_crisscross(N)
        c = classify_vertices(m)
        ns = np.flatnonzero(c.nearly_singular())
        np.testing.assert_array_equal(ns, np.arange((N + 1) ** 2, (N + 1) ** 2 + N * N))
        assert all(c.classes[v] == VertexClass.SINGULAR_INTERIOR for v in ns)
        assert c.exactly_singular[ns].all()
        assert c.theta_sigma == pytest.approx(math.pi / 6)


def test_perturbed_centers_stay_nearly_singular():
    m = generate_crisscross(4, 0.05, seed=3)
    c = classify_vertices(m)
    assert c.counts()[VertexClass.SINGULAR_INTERIOR] == 16
    assert not c.exactly_singular[25:].any()
    assert check_structure(m, c).ok


def test_vertex_patch_ordering(crisscross4):
    center = 25 + 5  # square (1, 1)
    p = vertex_patch(crisscross4, center)
    assert p.J == 4 and p.n_edges == 4 and not p.is_boundary
    np.testing.assert_allclose(p.angles, math.pi / 2)
    np.testing.assert_allclose(p.upsilon, math.pi)
    # counterclockwise: consecutive edge tangents turn left
    for j in range(4):
        a, b = p.tangents[j], p.tangents[(j + 1) % 4]
        assert a[0] * b[1] - a[1] * b[0] > 0
    # K_j and K_{j+1} share edge j
    for j in range(p.n_edges):
        ta, tb = (p.triangles[k] for k in p.edge_triangles(j))
        assert p.edge_vertices[j] in crisscross4.triangles[ta] and p.edge_vertices[j] in crisscross4.triangles[tb]


def test_boundary_patch(crisscross4):
    p = vertex_patch(crisscross4, 2)  # bottom edge, grid vertex
    assert p.is_boundary
    assert p.J == 4 and p.n_edges == 3
    assert p.angles.sum() == pytest.approx(math.pi)


def test_edge_normals_outward_on_boundary(crisscross4):
    m = crisscross4
    mid = m.vertices[m.edges].mean(axis=1)
    for e in np.flatnonzero(m.boundary_edge):
        n = m.edge_normals[e]
        assert np.linalg.norm(n) == pytest.approx(1.0)
        q = mid[e] + 0.1 * n
        assert np.any((q < 0) | (q > 1))


def test_structure_failure_adjacent_singular(crisscross4):
    # with a wide threshold every vertex counts as nearly singular, so
    # nearly singular vertices become adjacent
    c = classify_vertices(crisscross4, theta_sigma=1.6)
    rep = check_structure(crisscross4, c)
    assert not rep.isolated_singular_ok
    assert rep.adjacent_singular_edges
    assert "FAIL" in rep.describe()


def test_structure_failure_corner_pair():
    V = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    m = Mesh(V, np.array([[0, 1, 2], [0, 2, 3]]))
    rep = check_structure(m, classify_vertices(m))
    assert not rep.corner_pairs_ok


def test_synthetic_meshes_pass_structure():
    for m in (split_bottom_mesh(), corner_split_mesh()):
        assert check_structure(m, classify_vertices(m)).ok


def test_corner_split_mesh_corner_classes():
    m = corner_split_mesh()
    c = classify_vertices(m)
    corners = c.vertices_of(VertexClass.SINGULAR_CORNER)
    assert len(corners) == 4
    assert all(vertex_patch(m, int(v)).J == 1 for v in corners)


def test_mesh_validation_errors():
    V = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    with pytest.raises(MeshError, match="duplicate"):
        Mesh(V, np.array([[0, 1, 2], [0, 1, 2]]))
    with pytest.raises(MeshError):
        Mesh(V, np.array([[0, 2, 1]]))  # clockwise
    # hanging vertex: (0.5, 0) on the edge of a neighbour
    V2 = np.array([[0, 0], [1, 0], [0.5, 0], [0.5, 1], [0.5, -1]], dtype=float)
    with pytest.raises(MeshError, match="non-conforming"):
        Mesh(V2, np.array([[0, 2, 3], [2, 1, 3], [0, 4, 1]]))


def test_mesh_file_round_trip(tmp_path, perturbed4):
    path = tmp_path / "m.txt"
    write_mesh(perturbed4, path)
    m2 = read_mesh(path)
    np.testing.assert_array_equal(m2.vertices, perturbed4.vertices)
    np.testing.assert_array_equal(m2.triangles, perturbed4.triangles)


def test_mesh_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("v 0 0\nv 1 0\nq 1 2 3\n")
    with pytest.raises(MeshError, match="bad.txt:3"):
        read_mesh(p)
    p.write_text("v 0 0\nv 1 0\nv 0 1\nt 0 1 7\n")
    with pytest.raises(MeshError, match="missing vertex"):
        read_mesh(p)
