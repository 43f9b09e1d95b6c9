import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capillary_ac.errors import RejectedInputError, ResourceError
from capillary_ac.fem import FemSystem
from capillary_ac.geometry import PlanarDomain
from capillary_ac.mesh import NodalField, make_mesh

SQUARE = PlanarDomain("rectangle", 1.0, 1.0)
DISK = PlanarDomain("unit_disk")


def edge_counts(mesh):
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def test_square_structured_counts():
    m = make_mesh(SQUARE, 0.25)
    assert (len(m.triangles), m.n_nodes) == (32, 25)
    assert len(make_mesh(SQUARE, 0.125).triangles) == 4 * 32


def test_disk_boundary_polygon():
    m = make_mesh(DISK, 0.1)
    b = m.boundary_nodes
    assert np.max(np.abs(np.linalg.norm(m.nodes[b], axis=1) - 1)) < 1e-12
    n = len(m.boundary_edges)
    total = float(np.sum(m.edge_lengths))
    assert total == pytest.approx(2 * n * math.sin(math.pi / n), abs=1e-12)
    assert abs(total - 2 * math.pi) <= m.h ** 2


@pytest.mark.parametrize("dom, h", [(SQUARE, 0.1), (DISK, 0.1), (PlanarDomain("strip_rectangle", 2, 1), 0.2)])
def test_mesh_is_conforming(dom, h):
    m = make_mesh(dom, h)
    assert np.all(m.areas > 0)
    assert set(np.unique(edge_counts(m))) <= {1, 2}
    assert np.sum(edge_counts(m) == 1) == len(m.boundary_edges)
    if not dom.is_disk:
        assert m.areas.sum() == pytest.approx(dom.area, abs=1e-12)
    # outward normals point away from the centroid of the domain
    mid = 0.5 * (m.nodes[m.boundary_edges[:, 0]] + m.nodes[m.boundary_edges[:, 1]])
    centre = m.nodes.mean(axis=0)
    assert np.all(np.sum((mid - centre) * m.edge_normals, axis=1) > 0)
    assert np.all(m.quality() > 0.3)


def test_band_refinement_is_local():
    m = make_mesh(SQUARE, 0.1, band=(0.4, 0.6, 0.02))
    x = m.nodes[:, 0]
    inside = np.unique(x[(x > 0.42) & (x < 0.58)])
    outside = np.unique(x[x < 0.3])
    assert np.max(np.diff(inside)) <= 0.02 + 1e-12
    assert np.min(np.diff(outside)) >= 0.05


def test_mesh_limits():
    with pytest.raises(RejectedInputError):
        make_mesh(SQUARE, 0.0)
    with pytest.raises(RejectedInputError):
        make_mesh(SQUARE, 0.6)
    with pytest.raises(ResourceError):
        make_mesh(SQUARE, 1e-4)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3))
def test_linear_fields_are_reproduced(a, b, c):
    m = make_mesh(SQUARE, 0.125)
    f = NodalField(m, a + b * m.nodes[:, 0] + c * m.nodes[:, 1])
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    assert np.allclose(f.interpolate(pts), a + b * pts[:, 0] + c * pts[:, 1], atol=1e-12)
    assert np.allclose(f.gradients(), [b, c], atol=1e-11)
    assert f.integral() == pytest.approx(a + b / 2 + c / 2, abs=1e-12)


def test_nodal_field_rejects_bad_values():
    m = make_mesh(SQUARE, 0.25)
    with pytest.raises(RejectedInputError):
        NodalField(m, np.zeros(3))
    with pytest.raises(RejectedInputError):
        NodalField(m, np.full(m.n_nodes, np.nan))


@pytest.fixture(scope="module")
def fem():
    return FemSystem(make_mesh(SQUARE, 0.1))


def test_fem_linear_operators(fem):
    x = fem.mesh.nodes[:, 0]
    K = fem.stiffness
    assert np.max(np.abs(K @ np.ones(fem.n))) < 1e-12
    assert abs(K - K.T).max() < 1e-12
    assert x @ (K @ x) == pytest.approx(1.0, abs=1e-12)
    assert fem.lumped_mass.sum() == pytest.approx(1.0, abs=1e-12)
    assert fem.boundary_lumped.sum() == pytest.approx(4.0, abs=1e-12)
    assert np.allclose(fem.bulk(x, np.ones_like), fem.lumped_mass, atol=1e-15)


def test_fem_quadrature_exactness(fem):
    x, y = fem.mesh.nodes.T
    # degree-4 rule integrates the square of a linear field exactly
    assert fem.bulk_integral(x + 2 * y, np.square) == pytest.approx(1 / 3 + 1 + 4 / 3, abs=1e-12)
    assert fem.bulk_integral(x, lambda v: v ** 4) == pytest.approx(1 / 5, abs=1e-12)
    # boundary: int of x^2 over the four unit edges = 1/3 + 1/3 + 1 + 0
    assert fem.boundary_integral(x, np.square) == pytest.approx(5 / 3, abs=1e-12)


def test_fem_jacobians_match_finite_differences(fem):
    rng = np.random.default_rng(3)
    u = rng.uniform(-1, 1, fem.n)
    d = rng.standard_normal(fem.n)
    f, df = (lambda v: v ** 3 - v), (lambda v: 3 * v ** 2 - 1)
    for op in (fem.bulk, fem.boundary):
        _, M = op(u, f, df)
        h = 1e-6
        fd = (op(u + h * d, f) - op(u - h * d, f)) / (2 * h)
        assert np.max(np.abs(M @ d - fd)) < 1e-8


def test_discrete_laplacian_of_quadratic(fem):
    x, y = fem.mesh.nodes.T
    assert np.allclose(fem.discrete_laplacian(x + 3 * y)[fem.interior], 0.0, atol=1e-10)
    # pointwise values alternate with the local stencil; their mass-weighted mean is consistent
    lap = fem.discrete_laplacian(x ** 2)
    core = fem.interior & (x > 0.15) & (x < 0.85)
    m = fem.lumped_mass[core]
    assert np.sum(m * lap[core]) / np.sum(m) == pytest.approx(-2.0, rel=0.05)
