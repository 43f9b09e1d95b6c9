import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from capillary_ac.errors import BandTooWideError, DomainError, GeometricInfeasibilityError
from capillary_ac.geometry import PlanarDomain, build_fermi_chart, find_capillary_curve, level_curve_data

SQUARE = PlanarDomain("rectangle", 1.0, 1.0)
STRIP = PlanarDomain("strip_rectangle", 2.0, 1.0)
DISK = PlanarDomain("unit_disk")
ARC = {"kind": "arc", "offset": 0.9, "bulge": "right"}


@pytest.fixture(scope="module")
def arc():
    return find_capillary_curve(STRIP, math.pi / 3, ARC)


@pytest.fixture(scope="module")
def arc_chart(arc):
    return build_fermi_chart(arc, STRIP, 0.46, 0.04)


@pytest.fixture(scope="module")
def seg_chart():
    c = find_capillary_curve(SQUARE, math.pi / 2, {"kind": "segment", "offset": 0.5})
    return build_fermi_chart(c, SQUARE, 0.46, 0.02)


def test_domain_basics():
    assert DISK.area == pytest.approx(math.pi)
    assert SQUARE.perimeter == 4.0
    p = np.array([[0.3, 0.4], [0.0, 0.7]])
    assert np.allclose(np.linalg.norm(DISK.boundary_normal(p), axis=-1), 1.0)
    assert DISK.boundary_curvature(np.array([[1.0, 0.0]])) == pytest.approx(1.0)
    assert SQUARE.boundary_curvature(np.array([[0.5, 0.0]])) == pytest.approx(0.0)


def test_square_segment():
    c = find_capillary_curve(SQUARE, math.pi / 2, {"kind": "segment", "offset": 0.4})
    assert c.kappa == 0.0
    assert (c.area_plus, c.area_minus) == pytest.approx((0.6, 0.4), abs=1e-15)
    assert np.allclose(c.gamma(np.linspace(0, 1, 5))[:, 0], 0.4)
    assert c.contact_angles() == pytest.approx((math.pi / 2, math.pi / 2), abs=1e-12)


def test_disk_chord_areas():
    c = find_capillary_curve(DISK, math.pi / 3, {"kind": "chord"})
    assert c.kappa == 0.0
    small = math.pi / 3 - math.sqrt(3) / 4
    assert min(c.area_plus, c.area_minus) == pytest.approx(small, abs=1e-12)
    # independent oracle: area of the circular segment beyond distance 1/2
    seg, _ = quad(lambda x: 2 * math.sqrt(1 - x * x), 0.5, 1.0, epsabs=1e-13)
    assert small == pytest.approx(seg, abs=1e-10)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(400000, 2))
    pts = pts[np.sum(pts ** 2, axis=1) < 1]
    frac = np.mean(c.plus_side(pts))
    assert frac * math.pi == pytest.approx(c.area_plus, abs=0.01)
    d = abs(float(c.gamma(0.0) @ c.nu(0.0)))
    assert d == pytest.approx(0.5, abs=1e-12)


def test_strip_arc(arc):
    assert 1 / abs(arc.kappa) == pytest.approx(1 / (2 * math.cos(math.pi / 3)), abs=1e-12)
    assert abs(arc.kappa) == pytest.approx(1.0, abs=1e-12)
    assert arc.contact_angles() == pytest.approx((math.pi / 3, math.pi / 3), abs=1e-10)


@pytest.mark.parametrize("curve_args", [
    (SQUARE, math.pi / 2, {"kind": "segment", "offset": 0.3, "plus": "left"}),
    (STRIP, math.pi / 3, ARC),
    (STRIP, math.pi / 4, {"kind": "arc", "offset": 1.2, "bulge": "left"}),
    (DISK, math.pi / 3, {"kind": "chord", "direction": 0.7}),
    (DISK, math.pi / 2, {"kind": "chord"}),
])
def test_curve_invariants(curve_args):
    dom, theta, sel = curve_args
    c = find_capillary_curve(dom, theta, sel)
    for end in (0, 1):
        p = c.endpoint(end)
        assert abs(dom.dist_boundary(p[None])[0]) < 1e-12
        nu = c.nu(0.0 if end == 0 else c.length)
        vw = c.wall_normal(end)
        # nu points into M+, so the outward wall normal meets it at pi - theta
        assert abs(-float(nu @ vw) - math.cos(theta)) < 1e-8
        tc, tw = c.conormal(end), c.wall_tangent(end)
        for a, b in ((nu, tc), (vw, tw)):
            assert abs(np.linalg.norm(a) - 1) < 1e-12 and abs(np.linalg.norm(b) - 1) < 1e-12
            assert abs(a @ b) < 1e-12
        assert math.acos(np.clip(-nu @ vw, -1, 1)) == pytest.approx(
            math.acos(np.clip(abs(tc @ tw), -1, 1)), abs=1e-10)
    s = np.linspace(0, c.length, 51)[1:-1]
    assert np.all(dom.inside(c.gamma(s)))
    assert c.area_plus + c.area_minus == pytest.approx(dom.area, abs=1e-8)


def test_arc_area_split(arc):
    # M+ lies to the left of the arc x = cx + sqrt(R^2 - (y - 1/2)^2)
    cx = 0.9 - math.sin(math.pi / 3)
    area, _ = quad(lambda y: cx + math.sqrt(1 - (y - 0.5) ** 2), 0.0, 1.0, epsabs=1e-13)
    assert arc.area_plus == pytest.approx(area, abs=1e-6)


@pytest.mark.parametrize("dom, theta, sel", [
    (SQUARE, math.pi / 3, {"kind": "segment", "offset": 0.5}),
    (SQUARE, math.pi / 2, {"kind": "segment", "offset": 1.5}),
    (STRIP, math.pi / 2, ARC),
    (STRIP, math.pi / 3, {"kind": "arc", "offset": 1.9, "bulge": "right"}),
    (DISK, math.pi / 3, {"kind": "chord", "distance": 0.2}),
    (DISK, math.pi / 3, {"kind": "segment", "offset": 0.5}),
])
def test_infeasible_selectors(dom, theta, sel):
    with pytest.raises(GeometricInfeasibilityError):
        find_capillary_curve(dom, theta, sel)


def test_bad_theta():
    with pytest.raises(DomainError):
        find_capillary_curve(SQUARE, 0.0, {"kind": "segment", "offset": 0.5})


def test_segment_chart_is_translation(seg_chart):
    c = seg_chart.curve
    z = np.array([-0.3, -0.05, 0.0, 0.2, 0.45])
    s = np.array([0.0, 0.3, 0.5, 0.9, 1.0])
    expected = c.gamma(s) + z[:, None] * c.nu(s)
    assert np.max(np.abs(seg_chart.Y(z, s) - expected)) < 1e-10


def test_interior_chart_is_normal_exponential(arc, arc_chart):
    s = arc.length * np.array([0.35, 0.5, 0.65])
    z = np.array([-0.1, 0.15, 0.1])
    expected = arc.gamma(s) + z[:, None] * arc.nu(s)
    assert np.all(STRIP.dist_boundary(expected) >= 0.04)
    assert np.max(np.abs(arc_chart.Y(z, s) - expected)) < 1e-10


def test_endpoint_vector_field(arc, arc_chart):
    th = math.pi / 3
    for end, s in ((0, 0.0), (1, arc.length)):
        X = arc_chart.X(arc.endpoint(end)[None])[0]
        # with nu into M+ and the angle measured as arccos(-<nu, nu_wall>), the
        # wall-tangent unit combination is sin(theta) nu + cos(theta) conormal
        expected = math.sin(th) * arc.nu(s) + math.cos(th) * arc.conormal(end)
        assert np.max(np.abs(X - expected)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.2, 1.0), top=st.booleans())
def test_vector_field_tangent_to_wall(arc_chart, x, top):
    p = np.array([[x, 1.0 if top else 0.0]])
    X = arc_chart.X(p)[0]
    assert abs(X @ STRIP.boundary_normal(p)[0]) < 1e-8
    assert abs(np.linalg.norm(X) - 1) < 1e-12


def test_chart_jacobian_and_inverse(arc, arc_chart):
    zz, ss = np.meshgrid(np.linspace(-0.4, 0.4, 9), np.linspace(0, arc.length, 9), indexing="ij")
    assert np.all(arc_chart.jacobian(zz.ravel(), ss.ravel()) > 0)
    p = arc_chart.Y(zz.ravel(), ss.ravel())
    z, s, ok = arc_chart.inverse(p)
    assert np.all(ok)
    assert np.max(np.abs(z - zz.ravel())) < 1e-6
    assert np.max(np.abs(s - ss.ravel())) < 1e-6


def test_chart_too_wide(arc):
    with pytest.raises(BandTooWideError):
        build_fermi_chart(arc, STRIP, 0.95, 0.04)


def test_level_curves(arc_chart, seg_chart, arc):
    d0 = level_curve_data(arc_chart, 0.0)
    assert np.max(np.abs(d0.curvature - arc.kappa)) < 1e-6
    assert d0.length == pytest.approx(arc.length, abs=1e-6)
    for z in (-0.2, 0.3):
        assert np.max(np.abs(level_curve_data(seg_chart, z).curvature)) < 1e-6
    mid = len(d0.s) // 2
    hp = level_curve_data(arc_chart, 0.05).curvature[mid]
    hm = level_curve_data(arc_chart, -0.05).curvature[mid]
    assert abs((hp - hm) / 0.1 - arc.kappa ** 2) < 5e-2
    # level curves keep the wall angle
    assert level_curve_data(arc_chart, 0.05).angles == pytest.approx((math.pi / 3,) * 2, abs=1e-5)
    with pytest.raises(DomainError):
        level_curve_data(arc_chart, 0.5)
