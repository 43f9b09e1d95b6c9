import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capillary_ac.approx import (build_approx, build_cutoffs, interpolated_coefficients, ls_split,
                                 residuals, xi)
from capillary_ac.diagnostics import hausdorff_to_curve, nodal_set
from capillary_ac.errors import ConfigurationError, DomainError
from capillary_ac.mesh import NodalField, make_mesh
from capillary_ac.potential import build_wetting
from capillary_ac.profile1d import BandProjection

from conftest import approx_at, load_config


def slope(eps, vals):
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def test_cutoff_examples():
    cf = build_cutoffs(0.1, 0.5)
    for j in range(1, 6):
        assert cf.chi(j, 0.0) == 1.0
    assert cf.chi(1, math.sqrt(0.1)) == 0.0
    assert cf.chi(1, -0.5) == 0.0
    assert cf.support(2) == pytest.approx(0.3099032, abs=1e-7)
    assert xi(0.0) == 0.5 and xi(-1.0) == 0.0 and xi(1.0) == 1.0


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(0.01, 0.25), ds=st.floats(0.1, 0.9), t=st.floats(-1, 1))
def test_cutoffs_nested_even_monotone(eps, ds, t):
    cf = build_cutoffs(eps, ds)
    vals = [float(cf.chi(j, t)) for j in range(1, 6)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert all(float(cf.chi(j, -t)) == v for j, v in zip(range(1, 6), vals))
    assert all(float(cf.chi(j, abs(t) * 1.01 + 1e-9)) <= v + 1e-15 for j, v in zip(range(1, 6), vals))
    assert all(cf.support(j + 1) < cf.support(j) for j in range(1, 5))


def test_cutoff_errors():
    with pytest.raises(ConfigurationError):
        build_cutoffs(0.2, 0.5, tau0=0.3)
    with pytest.raises(DomainError):
        build_cutoffs(0.3, 0.5)
    with pytest.raises(DomainError):
        build_cutoffs(0.1, 1.0)


@pytest.fixture(scope="module")
def square_apx(square_setup):
    return approx_at(load_config("square_segment"), square_setup, 0.1)


def test_approx_point_values(square_apx):
    pts = np.array([[0.5, 0.3], [0.95, 0.5], [0.05, 0.5], [0.5 + 0.1 * math.sqrt(2), 0.5]])
    v = square_apx.evaluate(pts)
    assert v[0] == pytest.approx(0.0, abs=1e-14)
    assert v[1] == 1.0 and v[2] == -1.0
    assert v[3] == pytest.approx(math.tanh(1.0), abs=1e-8)
    assert square_apx.lambda_guess == 0.0


def test_approx_shifted_graph(square_setup):
    cfg = load_config("square_segment")
    eps = 0.1
    shift = 0.01 * eps
    apx = approx_at(cfg, square_setup, eps, zeta=lambda s: np.full(np.shape(s), shift))
    poly = nodal_set(apx.field)
    x = np.concatenate([c[:, 0] for c in poly.components])
    h = apx.mesh.h
    assert np.max(np.abs(x - (0.5 + shift))) <= h ** 2


def test_approx_rejects_large_graph(square_setup):
    with pytest.raises(DomainError):
        approx_at(load_config("square_segment"), square_setup, 0.1,
                  zeta=lambda s: np.full(np.shape(s), 0.2))


@pytest.mark.parametrize("name", ["square_segment", "strip_arc"])
def test_nodal_set_of_approx_recovers_curve(name, square_setup, strip_setup):
    setup = square_setup if name == "square_segment" else strip_setup
    apx = approx_at(load_config(name), setup, 0.05)
    d = hausdorff_to_curve(nodal_set(apx.field), setup.curve)
    assert d <= 2 * apx.mesh.h ** 2 + 1e-10


def test_square_residual_outside_glue(square_setup):
    cfg = load_config("square_segment")
    for eps in (0.2, 0.1, 0.05):
        apx = approx_at(cfg, square_setup, eps)
        rep = residuals(apx, square_setup.pot, square_setup.wet, 0.0)
        bound = 10 * math.exp(-math.sqrt(2) * eps ** (cfg.delta_star - 1))
        assert rep.sup_interior <= bound
        assert rep.sup_boundary <= 1e-6
        assert abs(rep.mass_defect) <= 1e-3


def test_strip_residual_slopes(strip_residuals):
    eps = np.array([0.2, 0.1, 0.05])
    interior = [strip_residuals[e].sup_interior for e in eps]
    pib = [strip_residuals[e].pi_boundary for e in eps]
    assert 0.8 <= slope(eps, interior) <= 1.2
    assert 1.7 <= slope(eps, pib) <= 2.3


def test_mass_defect_shrinks(strip_residuals):
    eps = np.array(sorted(strip_residuals))
    defect = np.abs([strip_residuals[e].mass_defect for e in eps])
    assert np.all(np.diff(defect) > 0)
    assert slope(eps, defect) >= 0.8


def test_discrete_laplacian_option(square_apx, square_setup):
    rep = residuals(square_apx, square_setup.pot, square_setup.wet, 0.0, laplacian="discrete")
    assert np.isfinite(rep.sup_interior)
    with pytest.raises(ValueError):
        residuals(square_apx, square_setup.pot, square_setup.wet, 0.0, laplacian="spectral")


def test_interpolated_coefficients(square_apx, square_setup, quartic):
    cf = interpolated_coefficients(square_apx, quartic, square_setup.wet)
    g = cf.gamma.values
    assert np.allclose(g, 2.0)
    assert np.all(cf.gamma_tilde == 0.0)
    wet = build_wetting(quartic, math.pi / 3)
    cf3 = interpolated_coefficients(square_apx, quartic, wet)
    bn = square_apx.mesh.boundary_nodes
    lo, hi = wet.sigma2_at_wells
    assert np.all((cf3.gamma_tilde[bn] >= min(lo, hi) - 1e-14) & (cf3.gamma_tilde[bn] <= max(lo, hi) + 1e-14))
    from capillary_ac.fem import FemSystem
    assert cf.smallest_eigenvalue(FemSystem(square_apx.mesh)) > 0
    # at the interface the interpolation weight is one half
    t0 = np.array([0.0])
    assert float(((1 - xi(t0)) * quartic.d2(-1.0) + xi(t0) * quartic.d2(1.0))[0]) == 2.0


@pytest.fixture(scope="module")
def strip_split(strip_setup):
    apx = approx_at(load_config("strip_arc"), strip_setup, 0.1)
    return apx, BandProjection(0.1, apx.profile)


def test_ls_split_zero(strip_split):
    apx, bp = strip_split
    sp = ls_split(NodalField(apx.mesh, np.zeros(apx.mesh.n_nodes)), apx, bp)
    assert np.all(sp.v_sharp.values == 0) and np.all(sp.v_flat.values == 0)
    assert np.all(sp.zeta_hat(sp.s_grid) == 0)


def test_ls_split_of_profile_derivative(strip_split):
    apx, bp = strip_split
    prof, eps, chart = apx.profile, apx.epsilon, apx.chart

    def v(p):
        z, _, ok = chart.inverse(p)
        return np.where(ok, prof.du1(np.nan_to_num(z) / eps), 0.0)

    sp = ls_split(v, apx, bp)
    assert np.max(np.abs(sp.a - 1.0)) < 1e-6
    assert np.max(np.abs(sp.fiber_pi_sharp)) < 1e-10


def test_ls_split_orthogonal_input(strip_split):
    apx, bp = strip_split
    prof, eps, chart = apx.profile, apx.epsilon, apx.chart

    def v(p):
        # even in z times an odd profile factor: zero projection on every fiber
        z, _, ok = chart.inverse(p)
        z = np.nan_to_num(z)
        return np.where(ok, z * prof.du1(z / eps), 0.0)

    sp = ls_split(v, apx, bp)
    assert np.max(np.abs(sp.zeta_hat(sp.s_grid))) < 1e-10
    vn = v(apx.mesh.nodes)
    band = sp.chi4 > 0
    assert np.max(np.abs(sp.v_sharp.values[band] - vn[band])) < 1e-8


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 1000))
def test_ls_split_reconstruction(strip_split, seed):
    apx, bp = strip_split
    rng = np.random.default_rng(seed)
    vals = apx.field.values * rng.uniform(0.5, 2) + rng.standard_normal(apx.mesh.n_nodes) * 0.1
    v = NodalField(apx.mesh, vals)
    sp = ls_split(v, apx, bp)
    assert np.max(np.abs(sp.reconstruct() - vals)) <= 1e-8
    assert np.max(np.abs(sp.fiber_pi_sharp)) <= 1e-10
