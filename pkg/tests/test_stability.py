import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh

from capillary_ac.errors import RejectedInputError
from capillary_ac.geometry import PlanarDomain, find_capillary_curve
from capillary_ac.stability import assemble_jacobi, check_nondegeneracy

SQUARE = PlanarDomain("rectangle", 1.0, 1.0)
DISK = PlanarDomain("unit_disk")
STRIP = PlanarDomain("strip_rectangle", 2.0, 1.0)


def square_problem(n=128):
    c = find_capillary_curve(SQUARE, math.pi / 2, {"kind": "segment", "offset": 0.5})
    return assemble_jacobi(c, SQUARE, n)


def diameter_problem(n=128, direction=0.0):
    c = find_capillary_curve(DISK, math.pi / 2, {"kind": "chord", "direction": direction})
    return assemble_jacobi(c, DISK, n)


def test_square_coefficients_vanish():
    jp = square_problem()
    assert jp.robin_coeff == (0.0, 0.0)
    assert np.all(jp.potential_coeff(jp.s) == 0.0)


def test_diameter_robin_is_wall_curvature():
    jp = diameter_problem()
    assert jp.length == pytest.approx(2.0)
    assert jp.robin_coeff == pytest.approx((1.0, 1.0), abs=1e-12)


def test_strip_arc_coefficients():
    c = find_capillary_curve(STRIP, math.pi / 3, {"kind": "arc", "offset": 0.9, "bulge": "right"})
    jp = assemble_jacobi(c, STRIP, 64)
    assert np.allclose(jp.potential_coeff(jp.s), 1.0)
    for end in (0, 1):
        expected = c.cos_wall(end) * c.kappa / math.sin(math.pi / 3)
        assert jp.robin_coeff[end] == pytest.approx(expected, abs=1e-12)
        assert abs(jp.robin_coeff[end]) == pytest.approx(1 / math.sqrt(3), abs=1e-12)


def test_small_grid_rejected():
    with pytest.raises(RejectedInputError):
        square_problem(16)


def test_square_nondegenerate_with_pi_squared():
    rep = check_nondegeneracy(square_problem())
    assert rep.verdict == "nondegenerate"
    assert rep.kernel is None
    # dense oracle: Neumann Laplacian on [0, 1], first nonzero eigenvalue
    n = 256
    h = 1 / (n - 1)
    w = np.full(n, h)
    w[[0, -1]] = h / 2
    K = (np.diag(np.r_[1, np.full(n - 2, 2), 1]) - np.eye(n, k=1) - np.eye(n, k=-1)) / h
    vals = eigh(K, np.diag(w), eigvals_only=True)
    assert vals[1] == pytest.approx(math.pi ** 2, rel=1e-3)
    assert rep.eigen_spectrum[0] == pytest.approx(vals[1], rel=1e-9)


def test_diameter_degenerate_rotation_kernel():
    rep = check_nondegeneracy(diameter_problem())
    assert rep.verdict == "degenerate"
    s = rep.s - 1.0
    k = rep.kernel * np.sign(rep.kernel[-1])
    assert np.max(np.abs(k - s)) < 1e-6
    assert abs(rep.kernel_c) < 1e-8
    jp = diameter_problem(256)
    assert abs(np.sum(jp.weights * k)) < 1e-8


@pytest.mark.parametrize("direction", [0.3, 1.2])
def test_rotated_diameter_stays_degenerate(direction):
    assert check_nondegeneracy(diameter_problem(direction=direction)).verdict == "degenerate"


@pytest.mark.parametrize("factory", [square_problem, diameter_problem])
def test_zero_maps_to_zero(factory):
    B = factory().bordered()
    assert np.all(B @ np.zeros(B.shape[1]) == 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), which=st.sampled_from(["square", "disk", "literal"]))
def test_bordered_operator_is_weighted_symmetric(seed, which):
    if which == "square":
        jp = square_problem(64)
    elif which == "disk":
        jp = diameter_problem(64)
    else:
        c = find_capillary_curve(STRIP, math.pi / 3, {"kind": "arc", "offset": 0.9})
        jp = assemble_jacobi(c, STRIP, 64, convention_flag="literal")
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, jp.n_nodes + 1))
    B = jp.bordered()
    lhs, rhs = jp.weighted_inner(B @ x, y), jp.weighted_inner(x, B @ y)
    scale = np.linalg.norm(B, ord=np.inf) * np.linalg.norm(x) * np.linalg.norm(y)
    assert abs(lhs - rhs) <= 1e-10 * scale
    S = jp.bordered_symmetric()
    assert np.max(np.abs(S - S.T)) <= 1e-10 * np.max(np.abs(S))


def test_spectrum_is_real_and_sorted():
    spectrum = check_nondegeneracy(square_problem()).eigen_spectrum
    assert np.isrealobj(spectrum)
    assert np.all(np.diff(spectrum) >= 0)


def test_literal_convention_flips_potential_sign():
    c = find_capillary_curve(STRIP, math.pi / 3, {"kind": "arc", "offset": 0.9})
    a = assemble_jacobi(c, STRIP, 64).stiffness()
    b = assemble_jacobi(c, STRIP, 64, convention_flag="literal").stiffness()
    w = assemble_jacobi(c, STRIP, 64).weights
    assert np.allclose(np.diag(b - a), 2 * w)
