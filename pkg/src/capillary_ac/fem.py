"""P1 finite-element assembly shared by the residual evaluator and the solver."""
from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix

from .mesh import TriangularMesh

# Degree-4 six-point rule on the reference triangle (barycentric points, weights sum to 1).
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
TRI_POINTS = np.array([[_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
                       [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B]])
TRI_WEIGHTS = np.array([_WA] * 3 + [_WB] * 3)

# Three-point Gauss rule on [0, 1] for boundary edges.
_G = math.sqrt(0.15)
EDGE_POINTS = np.array([0.5 - _G, 0.5, 0.5 + _G])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0
EDGE_BASIS = np.stack([1.0 - EDGE_POINTS, EDGE_POINTS], axis=1)  # (3 points, 2 nodes)


def _at_triangle_points(u, t):
    # u0 + l1 (u1 - u0) + l2 (u2 - u0) keeps constant fields exact at every point
    ut = u[t]
    return ut[:, :1] + (ut[:, 1:] - ut[:, :1]) @ TRI_POINTS[:, 1:].T


def _at_edge_points(u, e):
    ue = u[e]
    return ue[:, :1] + (ue[:, 1:] - ue[:, :1]) * EDGE_POINTS


class FemSystem:
    """Linear operators of a mesh plus quadrature-based nonlinear assembly."""

    def __init__(self, mesh: TriangularMesh):
        self.mesh = mesh
        n = mesh.n_nodes
        t = mesh.triangles
        g = mesh.gradients_of_basis()
        local = np.einsum("tid,tjd->tij", g, g) * mesh.areas[:, None, None]
        self._rows = np.repeat(t, 3, axis=1).ravel()
        self._cols = np.tile(t, (1, 3)).ravel()
        self.stiffness = coo_matrix((local.ravel(), (self._rows, self._cols)), shape=(n, n)).tocsr()
        self.lumped_mass = np.bincount(t.ravel(), np.repeat(mesh.areas / 3.0, 3), minlength=n)
        e = mesh.boundary_edges
        self._erows = np.repeat(e, 2, axis=1).ravel()
        self._ecols = np.tile(e, (1, 2)).ravel()
        self.boundary_lumped = np.bincount(e.ravel(), np.repeat(mesh.edge_lengths / 2.0, 2),
                                           minlength=n)
        self.interior = np.ones(n, dtype=bool)
        self.interior[mesh.boundary_nodes] = False

    @property
    def n(self):
        return self.mesh.n_nodes

    def bulk(self, u, f, df=None):
        """Vector int f(u) phi_i and optionally the matrix int df(u) phi_i phi_j."""
        t = self.mesh.triangles
        uq = _at_triangle_points(u, t)  # (T, 6)
        wa = self.mesh.areas[:, None] * TRI_WEIGHTS
        vec_local = (wa * f(uq)) @ TRI_POINTS  # (T, 3)
        vec = np.bincount(t.ravel(), vec_local.ravel(), minlength=self.n)
        if df is None:
            return vec
        mat_local = np.einsum("tq,qi,qj->tij", wa * df(uq), TRI_POINTS, TRI_POINTS)
        mat = coo_matrix((mat_local.ravel(), (self._rows, self._cols)), shape=(self.n, self.n))
        return vec, mat.tocsr()

    def bulk_integral(self, u, f):
        uq = _at_triangle_points(u, self.mesh.triangles)
        return float(np.sum(self.mesh.areas[:, None] * TRI_WEIGHTS * f(uq)))

    def boundary(self, u, f, df=None):
        """Vector int_boundary f(u) phi_i and optionally the matching matrix."""
        e = self.mesh.boundary_edges
        uq = _at_edge_points(u, e)  # (E, 3)
        wl = self.mesh.edge_lengths[:, None] * EDGE_WEIGHTS
        vec_local = (wl * f(uq)) @ EDGE_BASIS
        vec = np.bincount(e.ravel(), vec_local.ravel(), minlength=self.n)
        if df is None:
            return vec
        mat_local = np.einsum("eq,qi,qj->eij", wl * df(uq), EDGE_BASIS, EDGE_BASIS)
        mat = coo_matrix((mat_local.ravel(), (self._erows, self._ecols)), shape=(self.n, self.n))
        return vec, mat.tocsr()

    def boundary_integral(self, u, f):
        uq = _at_edge_points(u, self.mesh.boundary_edges)
        return float(np.sum(self.mesh.edge_lengths[:, None] * EDGE_WEIGHTS * f(uq)))

    def discrete_laplacian(self, u):
        """-Delta u at nodes: lumped-mass-scaled stiffness action."""
        return (self.stiffness @ u) / self.lumped_mass
