"""Triangular meshes and piecewise-linear nodal fields."""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import RejectedInputError, ResourceError
from .geometry import PlanarDomain

MAX_NODES = 2_000_000


class TriangularMesh:
    def __init__(self, nodes, triangles):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        tri = np.ascontiguousarray(triangles, dtype=np.int64)
        a = self._signed_areas(self.nodes, tri)
        flip = a < 0
        tri[flip] = tri[flip][:, [0, 2, 1]]
        self.triangles = tri
        self.areas = np.abs(a)
        if np.any(self.areas <= 0):
            raise RejectedInputError("degenerate triangle")
        self.boundary_edges, self.edge_normals, self.edge_lengths = self._boundary()
        self._tree = None

    @staticmethod
    def _signed_areas(p, t):
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def _boundary(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(e, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        edges = e[counts[inv.ravel()] == 1]
        # Interior lies to the left of a -> b, so the outward normal is on the right.
        d = self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]]
        length = np.linalg.norm(d, axis=1)
        normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order], normals[order], length[order]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def boundary_nodes(self):
        return np.unique(self.boundary_edges)

    @property
    def h(self):
        t = self.triangles
        p = self.nodes
        lens = [np.linalg.norm(p[t[:, i]] - p[t[:, (i + 1) % 3]], axis=1) for i in range(3)]
        return float(np.max(lens))

    def quality(self):
        """Per-element ratio 4 sqrt(3) area / sum of squared edge lengths (1 for equilateral)."""
        t, p = self.triangles, self.nodes
        s2 = sum(np.sum((p[t[:, i]] - p[t[:, (i + 1) % 3]]) ** 2, axis=1) for i in range(3))
        return 4.0 * math.sqrt(3.0) * self.areas / s2

    def gradients_of_basis(self):
        """(T, 3, 2) gradients of the three hat functions on each triangle."""
        t, p = self.triangles, self.nodes
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        two_a = 2.0 * self.areas[:, None]
        g0 = np.stack([b[:, 1] - c[:, 1], c[:, 0] - b[:, 0]], axis=1) / two_a
        g1 = np.stack([c[:, 1] - a[:, 1], a[:, 0] - c[:, 0]], axis=1) / two_a
        g2 = np.stack([a[:, 1] - b[:, 1], b[:, 0] - a[:, 0]], axis=1) / two_a
        return np.stack([g0, g1, g2], axis=1)

    def locate(self, points, k=16):
        """Containing triangle and barycentric coordinates (nearest triangle if outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            cent = self.nodes[self.triangles].mean(axis=1)
            self._tree = cKDTree(cent)
        k = min(k, len(self.triangles))
        _, cand = self._tree.query(pts, k=k)
        cand = cand.reshape(len(pts), k)
        tri = self.triangles[cand]
        a, b, c = self.nodes[tri[..., 0]], self.nodes[tri[..., 1]], self.nodes[tri[..., 2]]
        det = ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
               - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))
        q = pts[:, None, :] - a
        l1 = (q[..., 0] * (c[..., 1] - a[..., 1]) - q[..., 1] * (c[..., 0] - a[..., 0])) / det
        l2 = ((b[..., 0] - a[..., 0]) * q[..., 1] - (b[..., 1] - a[..., 1]) * q[..., 0]) / det
        bary = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        best = np.argmax(bary.min(axis=-1), axis=1)
        rows = np.arange(len(pts))
        return cand[rows, best], bary[rows, best]


class NodalField:
    """Piecewise-linear field: one value per mesh node."""

    def __init__(self, mesh: TriangularMesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise RejectedInputError("one value per node required")
        if not np.all(np.isfinite(values)):
            raise RejectedInputError("non-finite nodal value")
        self.mesh = mesh
        self.values = values

    def interpolate(self, points):
        tri, bary = self.mesh.locate(points)
        return np.sum(self.values[self.mesh.triangles[tri]] * bary, axis=1)

    def gradients(self):
        g = self.mesh.gradients_of_basis()
        return np.einsum("tk,tkd->td", self.values[self.mesh.triangles], g)

    def integral(self):
        t = self.mesh.triangles
        return float(np.sum(self.mesh.areas * self.values[t].sum(axis=1)) / 3.0)

    def copy(self):
        return NodalField(self.mesh, self.values.copy())


def _graded(lo, hi, h, band):
    """Breakpoints on [lo, hi] with spacing h, refined to band[2] inside [band[0], band[1]]."""
    if band is None:
        n = max(1, int(math.ceil((hi - lo) / h - 1e-9)))
        return np.linspace(lo, hi, n + 1)
    b0, b1, hf = max(lo, band[0]), min(hi, band[1]), band[2]
    parts = []
    for a, b, step in ((lo, b0, h), (b0, b1, hf), (b1, hi, h)):
        if b - a > 1e-12:
            n = max(1, int(math.ceil((b - a) / step - 1e-9)))
            parts.append(np.linspace(a, b, n + 1))
    return np.unique(np.concatenate(parts))


def _rectangle_mesh(W, H, h, band):
    x = _graded(0.0, W, h, band)
    y = _graded(0.0, H, h if band is None else band[2], None)
    nx, ny = len(x) - 1, len(y) - 1
    if (nx + 1) * (ny + 1) > MAX_NODES:
        raise ResourceError(f"{(nx + 1) * (ny + 1)} nodes exceed the budget of {MAX_NODES}")
    X, Y = np.meshgrid(x, y, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * (ny + 1) + j
    b = (i + 1) * (ny + 1) + j
    c = b + 1
    d = a + 1
    # Alternate the diagonal in a checkerboard to avoid a preferred direction.
    flip = (i + j) % 2 == 1
    t1 = np.where(flip[:, None], np.stack([a, b, d], 1), np.stack([a, b, c], 1))
    t2 = np.where(flip[:, None], np.stack([b, c, d], 1), np.stack([a, c, d], 1))
    return TriangularMesh(nodes, np.concatenate([t1, t2]))


def _disk_mesh(h):
    K = int(math.ceil(1.0 / h))
    if 3.7 * K * K > MAX_NODES:
        raise ResourceError("disk mesh exceeds the node budget")
    pts = [np.zeros((1, 2))]
    for k in range(1, K + 1):
        r = k / K
        m = max(6, int(round(2 * math.pi * r / h)))
        ang = 2 * math.pi * np.arange(m) / m + (0.5 * math.pi / m) * (k % 2)
        pts.append(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
    nodes = np.concatenate(pts)
    tri = Delaunay(nodes)
    simplices = tri.simplices
    a = TriangularMesh._signed_areas(nodes, simplices)
    # Drop slivers Delaunay may create along the convex hull.
    keep = np.abs(a) > 1e-14
    return TriangularMesh(nodes, simplices[keep])


def make_mesh(dom: PlanarDomain, h: float, band=None) -> TriangularMesh:
    """Structured mesh (rectangles) or ring-layered Delaunay mesh (disk).

    band = (x_lo, x_hi, h_fine) refines rectangles in x inside the band and
    uses h_fine in y.
    """
    if not (np.isfinite(h) and 0.0 < h <= 0.5):
        raise RejectedInputError("h must lie in (0, 0.5]")
    if dom.is_disk:
        return _disk_mesh(h)
    return _rectangle_mesh(dom.width, dom.height, h, band)
