"""Glued approximate solution, its residuals, and the fiberwise split."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import eigsh

from .errors import ChartCoverageError, ConfigurationError, DomainError
from .fem import FemSystem
from .geometry import FermiChart, smoothstep
from .mesh import NodalField, TriangularMesh
from .potential import DoubleWell, WettingDensity
from .profile1d import BandProjection, HeteroclinicProfile

COORDS = ("fermi", "twisted")


def xi(t):
    """Monotone step from 0 (t <= -1) to 1 (t >= 1) with xi(0) = 1/2."""
    return smoothstep((np.asarray(t, dtype=float) + 1.0) / 2.0)


@dataclass(frozen=True)
class CutoffFamily:
    epsilon: float
    delta_star: float

    @property
    def band(self):
        return self.epsilon ** self.delta_star

    def plateau(self, j):
        """chi_j = 1 for |t| <= plateau(j)."""
        return self.band * (1.0 - (2 * j - 1) / 100.0)

    def support(self, j):
        """chi_j = 0 for |t| >= support(j)."""
        return self.band * (1.0 - (2 * j - 2) / 100.0)

    def chi(self, j, t):
        if not 1 <= j <= 5:
            raise ValueError("cutoff index must be in 1..5")
        a, b = self.plateau(j), self.support(j)
        return 1.0 - smoothstep((np.abs(np.asarray(t, dtype=float)) - a) / (b - a))


def build_cutoffs(epsilon: float, delta_star: float = 0.5, tau0: float | None = None) -> CutoffFamily:
    if not 0.0 < epsilon <= 0.25:
        raise DomainError("epsilon must lie in (0, 0.25]")
    if not 0.0 < delta_star < 1.0:
        raise DomainError("delta_star must lie in (0, 1)")
    cf = CutoffFamily(float(epsilon), float(delta_star))
    if tau0 is not None and cf.band > tau0:
        raise ConfigurationError(f"band eps^delta* = {cf.band:.4g} exceeds the chart width tau0 = {tau0}")
    return cf


@dataclass
class ApproxSolution:
    field: NodalField
    zeta: Callable | None
    chart: FermiChart
    cutoffs: CutoffFamily
    profile: HeteroclinicProfile
    lambda_guess: float
    coords: str = "fermi"
    t: np.ndarray = field(default=None, repr=False)
    side: np.ndarray = field(default=None, repr=False)

    @property
    def epsilon(self):
        return self.cutoffs.epsilon

    @property
    def mesh(self):
        return self.field.mesh

    def band_coordinates(self, points):
        return _band_coordinates(points, self.chart, self.cutoffs, self.zeta, self.coords)

    def evaluate(self, points):
        t, side = self.band_coordinates(points)
        return _glue(t, side, self.cutoffs, self.profile)


def _band_coordinates(points, chart, cutoffs, zeta, coords):
    """Shifted band coordinate t = z - chi_2(z) zeta(s) (nan outside the band) and M+- side."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    curve = chart.curve
    side = np.where(curve.plus_side(pts), 1.0, -1.0)
    zf, sf = curve.fermi(pts)
    reach = cutoffs.support(1)
    zmax = 0.0
    if zeta is not None:
        probe = np.asarray(zeta(np.linspace(0.0, curve.length, 257)), dtype=float)
        zmax = float(np.max(np.abs(probe)))
    if coords == "fermi":
        near = (np.abs(zf) < reach + 2 * zmax) & curve.foot_valid(pts)
        z, s = zf, sf
    elif coords == "twisted":
        cot = abs(math.cos(curve.theta)) / math.sin(curve.theta)
        cand = (np.abs(zf) < (reach + 2 * zmax) * (1 + cot)) & curve.foot_valid(pts)
        z = np.full(len(pts), np.nan)
        s = np.full(len(pts), np.nan)
        idx = np.flatnonzero(cand)
        zi, si, ok = chart.inverse(pts[idx])
        z[idx[ok]], s[idx[ok]] = zi[ok], si[ok]
        near = np.zeros(len(pts), dtype=bool)
        near[idx[ok]] = np.abs(zi[ok]) < reach + 2 * zmax
        missing = (np.abs(zf) < reach * 0.5) & ~near & curve.foot_valid(pts)
        if np.any(missing):
            raise ChartCoverageError(f"{int(missing.sum())} points inside the band are not covered by the chart")
    else:
        raise ValueError(f"coords must be one of {COORDS}")
    t = np.full(len(pts), np.nan)
    zn = z[near]
    shift = 0.0 if zeta is None else cutoffs.chi(2, zn) * np.asarray(zeta(s[near]), dtype=float)
    t[near] = zn - shift
    return t, side


def _glue(t, side, cutoffs, profile):
    """chi_1 u1(t/eps) + (1 - chi_1) sign, and exactly +-1 outside the band."""
    out = side.copy()
    inb = np.isfinite(t) & (np.abs(np.nan_to_num(t)) < cutoffs.support(1))
    tb = t[inb]
    c1 = cutoffs.chi(1, tb)
    out[inb] = c1 * profile.u1(tb / cutoffs.epsilon) + (1.0 - c1) * np.sign(tb)
    return out


def build_approx(profile: HeteroclinicProfile, chart: FermiChart, cutoffs: CutoffFamily,
                 mesh: TriangularMesh, zeta: Callable | None = None, coords: str = "fermi",
                 c_star: float | None = None, lambda_guess: float | None = None) -> ApproxSolution:
    """Sample the glued approximate solution on the mesh nodes.

    coords="fermi" uses the normal distance to the extended curve as the
    profile variable; "twisted" uses the z coordinate of the twisted chart.
    """
    if zeta is not None:
        probe = np.asarray(zeta(np.linspace(0.0, chart.curve.length, 257)), dtype=float)
        if np.max(np.abs(probe)) >= 0.25 * cutoffs.band:
            raise DomainError("graph function too large for the band")
    t, side = _band_coordinates(mesh.nodes, chart, cutoffs, zeta, coords)
    values = _glue(t, side, cutoffs, profile)
    if lambda_guess is None:
        cs = profile.c if c_star is None else c_star
        lambda_guess = 0.5 * cs * chart.curve.kappa
    return ApproxSolution(NodalField(mesh, values), zeta, chart, cutoffs, profile,
                          float(lambda_guess), coords, t, side)


@dataclass
class ResidualReport:
    interior: NodalField
    interior_mask: np.ndarray
    glue_mask: np.ndarray
    boundary_points: list
    boundary_t: list
    boundary_values: list
    pi_boundary_ends: list
    mass_defect: float

    @property
    def sup_interior(self):
        vals = np.abs(self.interior.values[self.interior_mask])
        return float(vals.max()) if vals.size else 0.0

    @property
    def sup_glue(self):
        vals = np.abs(self.interior.values[self.glue_mask])
        return float(vals.max()) if vals.size else 0.0

    @property
    def sup_boundary(self):
        return float(max((np.max(np.abs(v)) for v in self.boundary_values), default=0.0))

    @property
    def pi_boundary(self):
        return float(max((abs(v) for v in self.pi_boundary_ends), default=0.0))

    def summary(self):
        return {"sup_interior": self.sup_interior, "sup_boundary": self.sup_boundary,
                "pi_boundary": self.pi_boundary, "mass_defect": self.mass_defect,
                "sup_glue": self.sup_glue}


def residuals(apx: ApproxSolution, pot: DoubleWell, wet: WettingDensity, lam: float,
              bp: BandProjection | None = None, fem: FemSystem | None = None,
              laplacian: str = "pointwise") -> ResidualReport:
    """Interior, boundary and mass residuals of the approximate solution.

    Interior: eps^2 (-Delta u) + W'(u) - eps lam at interior nodes. With
    laplacian="pointwise" Delta acts on the glued function itself through a
    five-point stencil of spacing eps/100; "discrete" uses the lumped-mass P1
    Laplacian of the nodal interpolant, which adds an O((h/eps)^2) consistency
    error. Nodes whose stencil touches the chi_1 transition are reported
    separately (glue region).
    Boundary: -eps du/dnu - sigma'(u) along the wall through each endpoint,
    parametrized by signed arclength, with one-sided differences, restricted
    to the chi_1 plateau.
    """
    eps = apx.epsilon
    mesh = apx.mesh
    fem = fem or FemSystem(mesh)
    bp = bp or BandProjection(eps, apx.profile)
    u = apx.field.values
    cf = apx.cutoffs
    if laplacian == "discrete":
        lap = fem.discrete_laplacian(u)
        h = mesh.h
    elif laplacian == "pointwise":
        h = 1e-2 * eps
        lap = np.zeros(mesh.n_nodes)
        idx = np.flatnonzero(fem.interior & np.isfinite(apx.t))
        p = mesh.nodes[idx]
        acc = 4.0 * u[idx]
        for d in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
            acc = acc - apx.evaluate(p + np.array(d))
        lap[idx] = acc / h ** 2
    else:
        raise ValueError("laplacian must be 'pointwise' or 'discrete'")
    r = eps ** 2 * lap + pot.d1(u) - eps * lam
    r = np.where(fem.interior, r, 0.0)
    curve = apx.chart.curve
    zf, _ = curve.fermi(mesh.nodes)
    zabs = np.where(curve.foot_valid(mesh.nodes), np.abs(zf), np.inf)
    # Stencils reaching into the chi_1 transition (width far below h for small eps).
    glue = (zabs > cf.plateau(1) - 2 * h) & (zabs < cf.support(1) + 2 * h) & fem.interior
    interior_mask = fem.interior & ~glue

    dom = apx.chart.domain
    pts_all, t_all, r_all, pis = [], [], [], []
    sin_min = max(math.sin(curve.theta), 1e-3)
    reach = cf.support(1) / sin_min + 4 * eps
    for end in (0, 1):
        q0 = curve.endpoint(end)
        tan = curve.wall_tangent(end)
        s_end = 0.0 if end == 0 else curve.length
        if tan @ curve.nu(s_end) < 0:
            tan = -tan  # positive arclength runs into M+
        tn = bp.nodes
        use = np.abs(tn) <= reach
        q = dom.walk(q0, tan, tn[use])
        nrm = dom.boundary_normal(q)
        dl = 1e-3 * eps
        u0 = apx.evaluate(q)
        u1 = apx.evaluate(q - dl * nrm)
        u2 = apx.evaluate(q - 2 * dl * nrm)
        dnu = (3 * u0 - 4 * u1 + u2) / (2 * dl)
        zq, _ = curve.fermi(q)
        keep = np.abs(zq) < cf.plateau(1)
        rb = np.zeros_like(tn)
        rb[np.flatnonzero(use)[keep]] = (-eps * dnu - wet.sigma1(u0))[keep]
        pis.append(float(bp.project(rb)))
        pts_all.append(q[keep])
        t_all.append(tn[use][keep])
        r_all.append(rb[use][keep])
    c_mass = curve.area_plus - curve.area_minus
    return ResidualReport(NodalField(mesh, r), interior_mask, glue, pts_all, t_all, r_all,
                          pis, apx.field.integral() - c_mass)


@dataclass
class CoefficientFields:
    gamma: NodalField
    gamma_tilde: np.ndarray  # per node, nonzero only on boundary nodes
    matrix: object

    def smallest_eigenvalue(self, fem: FemSystem):
        """Smallest |eigenvalue| of the lumped-mass symmetric scaling of the operator."""
        d = 1.0 / np.sqrt(fem.lumped_mass)
        S = diags(d) @ self.matrix @ diags(d)
        val = eigsh(S.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False,
                    v0=np.ones(S.shape[0]))
        return float(abs(val[0]))


def interpolated_coefficients(apx: ApproxSolution, pot: DoubleWell, wet: WettingDensity,
                              fem: FemSystem | None = None) -> CoefficientFields:
    """Gamma interpolating W''(-1), W''(1) across the band, and its wall analogue.

    The assembled weak-form matrix eps^2 K + M[Gamma] + eps B[Gamma~] is the
    linearization with these frozen coefficients.
    """
    mesh = apx.mesh
    fem = fem or FemSystem(mesh)
    eps = apx.epsilon
    wm, wp = float(pot.d2(-1.0)), float(pot.d2(1.0))
    sm, sp = wet.sigma2_at_wells
    t = apx.t
    x = np.where(np.isfinite(t), xi(np.nan_to_num(t) / eps), (apx.side > 0).astype(float))
    gamma = (1.0 - x) * wm + x * wp
    gtil = np.zeros(mesh.n_nodes)
    bn = mesh.boundary_nodes
    gtil[bn] = (1.0 - x[bn]) * sm + x[bn] * sp
    matrix = (eps ** 2 * fem.stiffness + diags(fem.lumped_mass * gamma)
              + eps * diags(fem.boundary_lumped * gtil))
    return CoefficientFields(NodalField(mesh, gamma), gtil, matrix.tocsr())


@dataclass
class LSSplit:
    v_sharp: NodalField
    v_flat: NodalField
    projection_part: NodalField
    chi4: np.ndarray
    zeta_hat: Callable
    s_grid: np.ndarray
    a: np.ndarray
    fiber_pi_sharp: np.ndarray

    def reconstruct(self):
        return self.chi4 * self.v_sharp.values + self.v_flat.values + self.projection_part.values


def ls_split(v, apx: ApproxSolution, bp: BandProjection, n_s: int = 41) -> LSSplit:
    """Fiberwise decomposition along twisted Fermi fibers.

    a(s) = Pi(v on the fiber through gamma(s)); v_sharp = v - a u1'(t/eps) on
    the band (fiberwise Pi-orthogonal); projection part chi_4 a u1'(t/eps);
    v_flat = v - chi_4 v_sharp - projection part. v is a NodalField or a
    callable on points.
    """
    chart, cf, eps = apx.chart, apx.cutoffs, apx.epsilon
    mesh = apx.mesh
    L = chart.curve.length
    r4 = min(cf.support(4), chart.tau0)
    use = np.abs(bp.nodes) <= r4
    tn, wn, ud = bp.nodes[use], bp.weights[use], bp.udot[use]
    norm = float(np.sum(wn * ud * ud))
    s_grid = np.linspace(0.0, L, n_s)
    T, S = np.meshgrid(tn, s_grid, indexing="ij")
    fiber_pts = chart.Y(T.ravel(), S.ravel())
    sample = v.interpolate if isinstance(v, NodalField) else v
    vf = np.asarray(sample(fiber_pts), dtype=float).reshape(T.shape)
    a = (wn * ud) @ vf / norm
    sharp_fiber = vf - np.outer(ud, a)
    fiber_pi = (wn * ud) @ sharp_fiber / norm

    nodes = mesh.nodes
    vn = v.values if isinstance(v, NodalField) else np.asarray(v(nodes), dtype=float)
    zf, _ = chart.curve.fermi(nodes)
    cot = abs(math.cos(chart.curve.theta)) / math.sin(chart.curve.theta)
    cand = np.flatnonzero((np.abs(zf) < r4 * (1 + cot)) & chart.curve.foot_valid(nodes))
    zt, st, ok = chart.inverse(nodes[cand])
    band = np.zeros(mesh.n_nodes, dtype=bool)
    tz = np.zeros(mesh.n_nodes)
    ss = np.zeros(mesh.n_nodes)
    inside = ok & (np.abs(np.nan_to_num(zt, nan=np.inf)) < r4)
    band[cand[inside]] = True
    tz[cand[inside]] = zt[inside]
    ss[cand[inside]] = st[inside]
    a_nodes = np.where(band, np.interp(ss, s_grid, a), 0.0)
    ud_nodes = np.where(band, apx.profile.du1(tz / eps), 0.0)
    chi4 = np.where(band, cf.chi(4, tz), 0.0)
    sharp = np.where(band, vn - a_nodes * ud_nodes, 0.0)
    proj = chi4 * a_nodes * ud_nodes
    flat = vn - chi4 * sharp - proj

    def zeta_hat(s):
        return -eps * np.interp(np.asarray(s, dtype=float), s_grid, a)

    return LSSplit(NodalField(mesh, sharp), NodalField(mesh, flat), NodalField(mesh, proj),
                   chi4, zeta_hat, s_grid, a, fiber_pi)
