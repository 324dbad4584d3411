import json

import numpy as np
import pytest
import scipy.sparse
import scipy.sparse.linalg

from krecycle.errors import DimensionError, InputError, ParseError
from krecycle.gl.mesh import (_TET_EDGES, Mesh, build_disk_mesh, tetra_covolumes,
                              triangle_covolumes)
from krecycle.gl.meshio import (MeshFormatWarning, load_mesh, load_mesh_json, load_mesh_msh,
                                read_msh, write_mesh_json, write_msh)

from oracles import triangle_covolume_by_hand


def edge_alpha(mesh):
    return {tuple(e): a for e, a in zip(mesh.edges.tolist(), mesh.alpha)}


def test_right_triangle():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])
    alpha = edge_alpha(mesh)
    assert alpha[(0, 1)] == pytest.approx(0.5)
    assert alpha[(0, 2)] == pytest.approx(0.5)
    assert alpha[(1, 2)] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(mesh.control_volumes, [0.25, 0.125, 0.125], atol=1e-15)
    assert mesh.volume == pytest.approx(0.5)


def test_equilateral_triangle():
    pts = [[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]]
    mesh = Mesh(pts, [[0, 1, 2]])
    np.testing.assert_allclose(mesh.alpha, 0.5 / np.tan(np.pi / 3) * np.ones(3), rtol=1e-14)
    np.testing.assert_allclose(mesh.control_volumes, mesh.volume / 3, rtol=1e-14)


def test_random_triangles_match_hand_covolumes(rng):
    for _ in range(20):
        P = rng.uniform(-1, 1, (3, 2))
        alpha, node_vol, area = triangle_covolumes(P, np.array([[0, 1, 2]]))
        ref = triangle_covolume_by_hand(*P)
        for k, (i, j) in enumerate([(0, 1), (1, 2), (0, 2)]):
            np.testing.assert_allclose(alpha[0, k], ref[(i, j)], rtol=1e-9, atol=1e-12)
        assert node_vol.sum() == pytest.approx(area[0], rel=1e-12)


def test_triangle_gradient_identity(rng):
    # sum over edges of alpha_e e e^T equals the cell area times I in 2D
    P = rng.uniform(-1, 1, (3, 2))
    alpha, _, area = triangle_covolumes(P, np.array([[0, 1, 2]]))
    S = sum(a * np.outer(P[j] - P[i], P[j] - P[i])
            for a, (i, j) in zip(alpha[0], [(0, 1), (1, 2), (2, 0)]))
    np.testing.assert_allclose(S, area[0] * np.eye(2), atol=1e-12)


def test_corner_tetrahedron_by_hand():
    # the circumcenter (1/2, 1/2, 1/2) lies outside, so the far edges get negative weight
    P = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    alpha, node_vol, vol = tetra_covolumes(P, np.array([[0, 1, 2, 3]]))
    np.testing.assert_allclose(alpha[0], [0.25] * 3 + [-1 / 24] * 3, atol=1e-14)
    assert node_vol.sum() == pytest.approx(vol[0], rel=1e-12)


def test_tetra_linear_flux_vanishes_at_interior_node(rng):
    from scipy.spatial import Delaunay
    P = np.vstack([[0.0, 0.0, 0.0], rng.uniform(-1, 1, (30, 3))])
    cells = Delaunay(P).simplices
    alpha, node_vol, vol = tetra_covolumes(P, cells)
    flux = np.zeros(3)
    for c, cell in enumerate(cells):
        for k, (i, j) in enumerate(_TET_EDGES):
            if cell[i] == 0:
                flux += alpha[c, k] * (P[cell[j]] - P[0])
            elif cell[j] == 0:
                flux += alpha[c, k] * (P[cell[i]] - P[0])
    np.testing.assert_allclose(flux, 0, atol=1e-12)
    assert node_vol.sum() == pytest.approx(vol.sum(), rel=1e-12)


def test_regular_tetrahedron():
    P = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    mesh = Mesh(P, [[0, 1, 2, 3]])
    edge_len = np.sqrt(8.0)
    # by symmetry alpha = vol / (6 |e|^2 / 3) for every edge
    np.testing.assert_allclose(mesh.alpha, mesh.volume * 3 / (6 * edge_len ** 2), rtol=1e-12)
    np.testing.assert_allclose(mesh.control_volumes, mesh.volume / 4, rtol=1e-12)


def test_disk_mesh_geometry():
    mesh = build_disk_mesh(5.0, 0.5)
    assert mesh.volume == pytest.approx(25 * np.pi, rel=0.02)
    assert mesh.control_volumes.sum() == pytest.approx(mesh.volume, rel=1e-10)
    b = mesh.boundary_nodes()
    np.testing.assert_allclose(np.linalg.norm(mesh.points[b], axis=1), 5.0, rtol=1e-12)
    assert np.all(np.isfinite(mesh.alpha))
    assert np.all(mesh.control_volumes > 0)


def test_negative_alpha_is_flagged():
    # two triangles sharing an edge opposite two obtuse angles
    pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 0.6], [1.0, -0.6]]
    mesh = Mesh(pts, [[0, 1, 2], [0, 3, 1]])
    assert mesh.n_negative_alpha == 1
    assert not mesh.is_delaunay
    assert edge_alpha(mesh)[(0, 1)] < 0


def test_neumann_solution_converges():
    # -lap u + u = g on the disk with u = cos(k r), which has zero normal derivative
    k = np.pi / 5

    def error(h):
        mesh = build_disk_mesh(5.0, h)
        r = np.linalg.norm(mesh.points, axis=1)
        u = np.cos(k * r)
        sinc = np.where(r > 0, np.sin(k * r) / np.where(r > 0, r, 1.0), k)
        vol = mesh.control_volumes
        lhs = (mesh.laplacian() + scipy.sparse.diags(vol)).tocsc()
        uh = scipy.sparse.linalg.spsolve(lhs, vol * (k * k * u + k * sinc + u))
        return np.sqrt(np.sum(vol * (uh - u) ** 2))

    e1, e2 = error(0.4), error(0.2)
    assert np.log2(e1 / e2) >= 1.0


@pytest.mark.parametrize("points,cells,error", [
    ([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [[0, 1, 2]], InputError),
    ([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 3]], InputError),
    ([[0.0], [1.0], [2.0]], [[0, 1, 2]], DimensionError),
    ([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [[0, 1, 2, 3]], DimensionError),
])
def test_invalid_meshes(points, cells, error):
    with pytest.raises(error):
        Mesh(points, cells)


def test_disk_mesh_rejects_bad_input():
    with pytest.raises(InputError):
        build_disk_mesh(-1.0, 0.1)
    with pytest.raises(InputError):
        build_disk_mesh(1.0, 0.0)


MINIMAL = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
1
1 2 2 0 1 1 2 3
$EndElements
"""


def test_minimal_msh(tmp_path):
    path = tmp_path / "tri.msh"
    path.write_text(MINIMAL)
    mesh = load_mesh_msh(path)
    assert mesh.cells.shape == (1, 3)
    assert mesh.dim == 2


def test_msh_quads_skipped(tmp_path):
    text = MINIMAL.replace("$Elements\n1\n", "$Elements\n3\n").replace(
        "$EndElements", "2 3 2 0 1 1 2 3 1\n3 3 2 0 1 1 2 3 1\n$EndElements")
    path = tmp_path / "quad.msh"
    path.write_text(text)
    with pytest.warns(MeshFormatWarning):
        points, cells, skipped = read_msh(path)
    assert skipped == 2
    assert cells.shape == (1, 3)


def test_msh_unknown_sections_and_lines(tmp_path):
    text = MINIMAL.replace("$Nodes", "$PhysicalNames\n1\n2 1 \"disk\"\n$EndPhysicalNames\n$Nodes")
    path = tmp_path / "phys.msh"
    path.write_text(text)
    assert load_mesh_msh(path).n_nodes == 3


@pytest.mark.parametrize("old,new,line", [
    ("2.2 0 8", "4.1 0 8", 2),
    ("2 1 0 0\n", "2 1 zero 0\n", 7),
    ("1 2 2 0 1 1 2 3", "1 2 2 0 1 1 2", 12),
    ("1 2 2 0 1 1 2 3", "1 2 2 0 1 1 2 9", 12),
])
def test_msh_errors_carry_line_number(tmp_path, old, new, line):
    path = tmp_path / "bad.msh"
    path.write_text(MINIMAL.replace(old, new))
    with pytest.raises(ParseError) as info:
        read_msh(path)
    assert info.value.lineno == line


def test_msh_binary_and_truncated(tmp_path):
    path = tmp_path / "bin.msh"
    path.write_text(MINIMAL.replace("2.2 0 8", "2.2 1 8"))
    with pytest.raises(ParseError):
        read_msh(path)
    path.write_text(MINIMAL[:60])
    with pytest.raises(ParseError):
        read_msh(path)


@pytest.mark.parametrize("fmt", ["msh", "json"])
def test_round_trip_bit_identical(tmp_path, fmt):
    mesh = build_disk_mesh(5.0, 0.7)
    path = tmp_path / f"disk.{fmt}"
    if fmt == "msh":
        write_msh(mesh, path)
    else:
        write_mesh_json(mesh, path)
    again = load_mesh(path)
    np.testing.assert_array_equal(again.points, mesh.points)
    np.testing.assert_array_equal(again.alpha, mesh.alpha)
    np.testing.assert_array_equal(again.control_volumes, mesh.control_volumes)


def test_tetra_msh_round_trip(tmp_path):
    P = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float)
    mesh = Mesh(P, [[0, 1, 2, 3], [1, 2, 3, 4]])
    path = tmp_path / "tet.msh"
    write_msh(mesh, path)
    again = load_mesh_msh(path)
    assert again.cells.shape == (2, 4)
    np.testing.assert_array_equal(again.control_volumes, mesh.control_volumes)


def test_json_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{\"points\": [[0, 0]]")
    with pytest.raises(ParseError):
        load_mesh_json(path)
    path.write_text(json.dumps({"points": [[0, 0]]}))
    with pytest.raises(ParseError):
        load_mesh_json(path)
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "mesh.vtk")
