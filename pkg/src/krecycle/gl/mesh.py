"""Simplicial meshes with Voronoi covolume data.

For every edge ``e = (i, j)`` the coefficient ``alpha_e`` is the ratio of the
dual (Voronoi) facet measure to the edge length, accumulated cell by cell from
circumcenters.  Control volumes ``|Omega_k|`` are the measures of the dual
cells.  On a triangle the contribution to ``alpha`` of the edge opposite the
vertex with interior angle ``theta`` is ``cot(theta) / 2``.
"""
import numpy as np
import scipy.sparse
import scipy.spatial

from ..errors import DimensionError, InputError

__all__ = ["Mesh", "build_disk_mesh", "triangle_covolumes", "tetra_covolumes"]

_TRI_EDGES = np.array([[0, 1], [1, 2], [2, 0]])
_TRI_OPPOSITE = np.array([2, 0, 1])
_TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
_TET_OTHERS = np.array([[2, 3], [1, 3], [1, 2], [0, 3], [0, 2], [0, 1]])


def triangle_covolumes(points, cells):
    """Per-cell edge coefficients and node weights of triangles.

    Returns ``(alpha, node_vol, area)`` with shapes ``(m, 3)``, ``(m, 3)`` and
    ``(m,)``; ``alpha[c, k]`` belongs to local edge ``_TRI_EDGES[k]``.
    """
    P = points[cells]
    i, j = _TRI_EDGES[:, 0], _TRI_EDGES[:, 1]
    a = P[:, i] - P[:, _TRI_OPPOSITE]
    b = P[:, j] - P[:, _TRI_OPPOSITE]
    dots = np.einsum("cek,cek->ce", a, b)
    e0 = P[:, 1] - P[:, 0]
    e1 = P[:, 2] - P[:, 0]
    if points.shape[1] == 2:
        twice_area = np.abs(e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
    else:
        twice_area = np.linalg.norm(np.cross(e0, e1), axis=1)
    alpha = 0.5 * dots / twice_area[:, None]
    edge_len2 = np.sum((P[:, j] - P[:, i]) ** 2, axis=2)
    piece = 0.25 * edge_len2 * alpha
    node_vol = np.zeros_like(piece)
    for k, (p, q) in enumerate(_TRI_EDGES):
        node_vol[:, p] += piece[:, k]
        node_vol[:, q] += piece[:, k]
    return alpha, node_vol, 0.5 * twice_area


def _face_circumcenter(p0, p1, p2):
    a = p1 - p0
    b = p2 - p0
    axb = np.cross(a, b)
    num = np.cross(np.sum(a * a, 1)[:, None] * b - np.sum(b * b, 1)[:, None] * a, axb)
    return p0 + num / (2.0 * np.sum(axb * axb, 1))[:, None]


def tetra_covolumes(points, cells):
    """Per-cell edge coefficients and node weights of tetrahedra.

    The dual facet of edge ``(i, j)`` inside a tetrahedron is the (signed)
    quadrilateral spanned by the edge midpoint, the two adjacent face
    circumcenters and the tetrahedron circumcenter. It splits into two right
    triangles, one per adjacent face.
    """
    P = points[cells]
    p0 = P[:, 0]
    D = P[:, 1:] - p0[:, None, :]
    rhs = 0.5 * np.sum(D * D, axis=2)
    cc = p0 + np.linalg.solve(D, rhs[..., None])[..., 0]
    volume = np.abs(np.linalg.det(D)) / 6.0
    m = P.shape[0]
    alpha = np.empty((m, 6))
    node_vol = np.zeros((m, 4))
    for k, ((i, j), (p, q)) in enumerate(zip(_TET_EDGES, _TET_OTHERS)):
        pi, pj = P[:, i], P[:, j]
        mid = 0.5 * (pi + pj)
        edge = pj - pi
        length = np.linalg.norm(edge, axis=1)
        covol = np.zeros(m)
        for a, b in ((p, q), (q, p)):
            pa, pb = P[:, a], P[:, b]
            fc = _face_circumcenter(pi, pj, pa)
            normal = np.cross(edge, pa - pi)
            normal /= np.linalg.norm(normal, axis=1)[:, None]
            # in-face distance from the edge midpoint, positive towards pa
            inplane = np.cross(normal, edge) / length[:, None]
            inplane *= np.sign(np.einsum("ck,ck->c", inplane, pa - pi))[:, None]
            h_face = np.einsum("ck,ck->c", fc - mid, inplane)
            # distance of the circumcenter from the face, positive towards pb
            normal *= np.sign(np.einsum("ck,ck->c", normal, pb - pi))[:, None]
            h_cell = np.einsum("ck,ck->c", cc - fc, normal)
            covol += 0.5 * h_face * h_cell
        alpha[:, k] = covol / length
        piece = covol * length / 6.0
        node_vol[:, i] += piece
        node_vol[:, j] += piece
    return alpha, node_vol, volume


class Mesh:
    """Triangle or tetrahedron mesh with edge coefficients and control volumes.

    :param points: node coordinates, ``(n, 2)`` or ``(n, 3)``.
    :param cells: simplices, ``(m, 3)`` triangles or ``(m, 4)`` tetrahedra.

    Attributes ``edges`` (``(E, 2)``, ``i < j``), ``alpha`` (``(E,)``) and
    ``control_volumes`` (``(n,)``) are computed on construction.
    """

    def __init__(self, points, cells):
        points = np.ascontiguousarray(points, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] not in (2, 3):
            raise DimensionError(f"points must have shape (n, 2) or (n, 3), got {points.shape}")
        if cells.ndim != 2 or cells.shape[1] not in (3, 4) or cells.shape[0] == 0:
            raise InputError(f"cells must be a non-empty (m, 3) or (m, 4) array, got {cells.shape}")
        if cells.min() < 0 or cells.max() >= points.shape[0]:
            raise InputError("cell references a nonexistent node")
        if cells.shape[1] == 4 and points.shape[1] != 3:
            raise DimensionError("tetrahedra need 3-D points")
        self.points = points
        self.cells = cells
        covolumes = triangle_covolumes if cells.shape[1] == 3 else tetra_covolumes
        local_edges = _TRI_EDGES if cells.shape[1] == 3 else _TET_EDGES
        with np.errstate(divide="ignore", invalid="ignore"):
            try:
                alpha_c, node_c, vol_c = covolumes(points, cells)
            except np.linalg.LinAlgError:
                raise InputError("degenerate cell (zero measure) in mesh") from None
        if not (np.all(np.isfinite(alpha_c)) and np.all(vol_c > 0)):
            raise InputError("degenerate cell (zero measure) in mesh")
        self.cell_volumes = vol_c
        pairs = np.sort(cells[:, local_edges].reshape(-1, 2), axis=1)
        self.edges, inv = np.unique(pairs, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        self.cell_edges = inv.reshape(cells.shape[0], -1)
        self.alpha = np.bincount(inv, weights=alpha_c.reshape(-1), minlength=len(self.edges))
        self.control_volumes = np.bincount(cells.reshape(-1), weights=node_c.reshape(-1),
                                           minlength=points.shape[0])
        if np.any(self.control_volumes <= 0):
            raise InputError("mesh has nodes with non-positive control volume "
                             "(unreferenced nodes or a badly non-Delaunay mesh)")

    @property
    def n_nodes(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def volume(self):
        return float(self.cell_volumes.sum())

    @property
    def n_negative_alpha(self):
        """Number of edges with negative coefficient (non-Delaunay edges)."""
        return int(np.count_nonzero(self.alpha < 0))

    @property
    def is_delaunay(self):
        return self.n_negative_alpha == 0

    def edge_midpoints(self):
        return 0.5 * (self.points[self.edges[:, 0]] + self.points[self.edges[:, 1]])

    def edge_vectors(self):
        return self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]]

    def boundary_nodes(self):
        """Nodes on facets that belong to exactly one cell."""
        k = self.cells.shape[1]
        faces = np.concatenate([np.delete(self.cells, r, axis=1) for r in range(k)])
        faces = np.sort(faces, axis=1)
        uniq, counts = np.unique(faces, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])

    def laplacian(self):
        """Edge-weighted graph Laplacian ``sum_e alpha_e (e_i - e_j)(e_i - e_j)^T``."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        n = self.n_nodes
        a = self.alpha
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        vals = np.concatenate([a, a, -a, -a])
        return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def __repr__(self):
        kind = "triangles" if self.cells.shape[1] == 3 else "tetrahedra"
        return f"Mesh({self.n_nodes} nodes, {self.cells.shape[0]} {kind})"


def build_disk_mesh(radius, target_h):
    """Delaunay mesh of the disk ``{|x| < radius}`` with spacing about ``target_h``.

    Nodes are placed on concentric circles (the outermost one being the
    boundary) with roughly ``target_h`` spacing along each circle.
    """
    radius = float(radius)
    target_h = float(target_h)
    if not (radius > 0 and target_h > 0 and np.isfinite(radius) and np.isfinite(target_h)):
        raise InputError("radius and target_h must be positive and finite")
    n_rings = int(np.ceil(radius / target_h))
    if n_rings < 1 or n_rings > 2000:
        raise InputError(f"unreasonable mesh resolution: {n_rings} rings")
    pts = [np.zeros((1, 2))]
    for ring in range(1, n_rings + 1):
        r = radius * ring / n_rings
        k = max(6, int(round(2 * np.pi * r / target_h)))
        theta = 2 * np.pi * (np.arange(k) + 0.5 * (ring % 2)) / k
        pts.append(r * np.column_stack([np.cos(theta), np.sin(theta)]))
    points = np.concatenate(pts)
    tri = scipy.spatial.Delaunay(points)
    cells = tri.simplices
    P = points[cells]
    e0, e1 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    area = 0.5 * np.abs(e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
    cells = cells[area > 1e-10 * target_h ** 2]
    return Mesh(points, cells)
