"""Planar domains, capillary curves and the twisted Fermi chart.

Orientation: nu points into M+ = {u > 0}. With the wetting law
sigma' = cos(theta) sqrt(2W) >= 0 the boundary condition -eps du/dnu = sigma'(u)
produces interfaces with <nu, nu_wall> = -cos(theta); theta is the interior
angle of M- at the wall. ``cos_wall`` stores the signed pairing <nu, nu_wall>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RectBivariateSpline

from .errors import (BandTooWideError, DomainError, GeometricInfeasibilityError,
                     RejectedInputError)

DOMAIN_KINDS = ("rectangle", "strip_rectangle", "unit_disk")


def _rot(v):
    """Rotate vectors by +90 degrees."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def smoothstep(x):
    """Quintic smoothstep: 0 for x <= 0, 1 for x >= 1, C^2."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class PlanarDomain:
    """Rectangle [0, width] x [0, height] or the unit disk centred at the origin."""

    kind: str
    width: float = 1.0
    height: float = 1.0

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise RejectedInputError(f"unknown domain kind {self.kind!r}")
        if self.kind != "unit_disk" and not (self.width > 0 and self.height > 0):
            raise RejectedInputError("width and height must be positive")

    @classmethod
    def from_descriptor(cls, desc: dict) -> "PlanarDomain":
        kind = desc.get("kind")
        if kind == "unit_disk":
            return cls("unit_disk")
        return cls(kind, float(desc.get("width", 1.0)), float(desc.get("height", 1.0)))

    def descriptor(self) -> dict:
        if self.kind == "unit_disk":
            return {"kind": "unit_disk"}
        return {"kind": self.kind, "width": self.width, "height": self.height}

    @property
    def is_disk(self):
        return self.kind == "unit_disk"

    @property
    def area(self):
        return math.pi if self.is_disk else self.width * self.height

    @property
    def perimeter(self):
        return 2 * math.pi if self.is_disk else 2 * (self.width + self.height)

    @property
    def corners(self):
        if self.is_disk:
            return np.zeros((0, 2))
        W, H = self.width, self.height
        return np.array([[0.0, 0.0], [W, 0.0], [W, H], [0.0, H]])

    def _wall_distances(self, p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([y, self.width - x, self.height - y, x], axis=-1)

    _WALL_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

    def dist_boundary(self, p):
        """Signed distance to the boundary, positive inside."""
        p = np.asarray(p, dtype=float)
        if self.is_disk:
            return 1.0 - np.linalg.norm(p, axis=-1)
        return np.min(self._wall_distances(p), axis=-1)

    def inside(self, p, tol=1e-12):
        return self.dist_boundary(p) >= -tol

    def boundary_normal(self, p):
        """Outward normal of the nearest boundary point (extension of nu_wall)."""
        p = np.asarray(p, dtype=float)
        if self.is_disk:
            r = np.linalg.norm(p, axis=-1, keepdims=True)
            return p / np.where(r > 0, r, 1.0)
        k = np.argmin(self._wall_distances(p), axis=-1)
        return self._WALL_NORMALS[k]

    def boundary_curvature(self, p):
        """II_wall(tau, tau) at the nearest boundary point: 1 on the unit circle, 0 on flat walls."""
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1], 1.0 if self.is_disk else 0.0)

    def project_to_boundary(self, p):
        p = np.asarray(p, dtype=float)
        return p + self.dist_boundary(p)[..., None] * self.boundary_normal(p)

    def walk(self, q, tangent, t):
        """Boundary point at signed arclength t from boundary point q along tangent."""
        q = np.asarray(q, dtype=float)
        t = np.asarray(t, dtype=float)
        tangent = np.asarray(tangent, dtype=float)
        if self.is_disk:
            orient = np.sign(q[0] * tangent[1] - q[1] * tangent[0])
            ang = math.atan2(q[1], q[0]) + orient * t
            return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        return q + t[..., None] * tangent


class CapillaryCurve:
    """Constant-curvature curve meeting the walls at contact angle theta.

    Subclasses provide gamma, tangent, nu, the extended Fermi coordinates and
    the side predicate.
    """

    kind = "abstract"
    kappa = 0.0

    def __init__(self, domain: PlanarDomain, theta: float, length: float,
                 area_plus: float, area_minus: float):
        self.domain = domain
        self.theta = float(theta)
        self.length = float(length)
        self.area_plus = float(area_plus)
        self.area_minus = float(area_minus)

    @property
    def areas(self):
        return self.area_plus, self.area_minus

    # interface -----------------------------------------------------------
    def gamma(self, s):
        raise NotImplementedError

    def tangent(self, s):
        raise NotImplementedError

    def nu(self, s):
        raise NotImplementedError

    def fermi(self, p):
        """(z, s): signed normal distance to the extended curve and foot parameter."""
        raise NotImplementedError

    def fermi_direction(self, p):
        """Unit gradient of the extended normal distance."""
        raise NotImplementedError

    def plus_side(self, p):
        raise NotImplementedError

    def foot_valid(self, p):
        return np.ones(np.shape(p)[:-1], dtype=bool)

    # endpoint data -------------------------------------------------------
    def endpoint(self, end: int):
        return self.gamma(0.0 if end == 0 else self.length)

    def conormal(self, end: int):
        """Outward conormal tau of the curve at an endpoint."""
        s = 0.0 if end == 0 else self.length
        return self.tangent(s) * (-1.0 if end == 0 else 1.0)

    def wall_normal(self, end: int):
        return self.domain.boundary_normal(self.endpoint(end))

    def cos_wall(self, end: int) -> float:
        s = 0.0 if end == 0 else self.length
        return float(self.nu(s) @ self.wall_normal(end))

    def wall_tangent(self, end: int):
        """Boundary tangent co-oriented with the frame (nu, conormal).

        The rotation taking nu to the conormal takes nu_wall to this vector, so
        angle(nu, nu_wall) = angle(conormal, wall_tangent). With the
        orientation used here it points into M-.
        """
        s = 0.0 if end == 0 else self.length
        nu, tau = self.nu(s), self.conormal(end)
        cross = nu[0] * tau[1] - nu[1] * tau[0]
        return np.sign(cross) * _rot(self.wall_normal(end))

    def contact_angles(self):
        return tuple(math.acos(np.clip(-self.cos_wall(e), -1, 1)) for e in (0, 1))

    def verify(self, n=201):
        s = np.linspace(0.0, self.length, n)
        pts = self.gamma(s)
        d = self.domain.dist_boundary(pts)
        if max(abs(d[0]), abs(d[-1])) > 1e-10:
            raise GeometricInfeasibilityError("curve endpoints are not on the boundary")
        if np.any(d[1:-1] <= 0):
            raise GeometricInfeasibilityError("curve leaves the domain")
        h = s[1] - s[0]
        acc = (pts[2:] - 2 * pts[1:-1] + pts[:-2]) / h ** 2
        kap = np.einsum("ij,ij->i", acc, self.nu(s[1:-1]))
        if np.max(np.abs(kap - self.kappa)) > 1e-4 * max(1.0, abs(self.kappa)):
            raise GeometricInfeasibilityError("curvature is not constant")
        for ang in self.contact_angles():
            if abs(ang - self.theta) > 1e-8:
                raise GeometricInfeasibilityError("endpoint angle differs from theta")
        if abs(self.area_plus + self.area_minus - self.domain.area) > 1e-8:
            raise GeometricInfeasibilityError("area split does not add up")
        return True

    def summary(self) -> dict:
        left, right = self.contact_angles()
        return {"kappa": self.kappa, "L": self.length, "theta_left": left,
                "theta_right": right, "area_plus": self.area_plus,
                "area_minus": self.area_minus}


class SegmentCurve(CapillaryCurve):
    kind = "segment"
    kappa = 0.0

    def __init__(self, domain, theta, origin, direction, normal, length, area_plus, area_minus):
        super().__init__(domain, theta, length, area_plus, area_minus)
        self.origin = np.asarray(origin, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.normal = np.asarray(normal, dtype=float)

    def gamma(self, s):
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.direction

    def tangent(self, s):
        return np.broadcast_to(self.direction, np.shape(s) + (2,)).copy()

    def nu(self, s):
        return np.broadcast_to(self.normal, np.shape(s) + (2,)).copy()

    def fermi(self, p):
        q = np.asarray(p, dtype=float) - self.origin
        return q @ self.normal, q @ self.direction

    def fermi_direction(self, p):
        return np.broadcast_to(self.normal, np.shape(p)).copy()

    def plus_side(self, p):
        return self.fermi(p)[0] > 0


class ArcCurve(CapillaryCurve):
    """Circular arc gamma(s) = c + R (cos phi, sin phi), phi = phi0 + orient s / R."""

    kind = "arc"

    def __init__(self, domain, theta, center, radius, phi0, orient, to_center,
                 length, area_plus, area_minus, plus_fn):
        super().__init__(domain, theta, length, area_plus, area_minus)
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.phi0 = float(phi0)
        self.orient = float(orient)
        self.to_center = bool(to_center)
        self.kappa = (1.0 if to_center else -1.0) / self.radius
        self._plus_fn = plus_fn
        self._phi_mid = self.phi0 + self.orient * 0.5 * self.length / self.radius

    def _phi(self, s):
        return self.phi0 + self.orient * np.asarray(s, dtype=float) / self.radius

    def gamma(self, s):
        phi = self._phi(s)
        return self.center + self.radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    def tangent(self, s):
        phi = self._phi(s)
        return self.orient * np.stack([-np.sin(phi), np.cos(phi)], axis=-1)

    def nu(self, s):
        phi = self._phi(s)
        out = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return -out if self.to_center else out

    def fermi(self, p):
        q = np.asarray(p, dtype=float) - self.center
        r = np.linalg.norm(q, axis=-1)
        z = self.radius - r if self.to_center else r - self.radius
        ang = np.arctan2(q[..., 1], q[..., 0]) - self._phi_mid
        ang = (ang + math.pi) % (2 * math.pi) - math.pi
        s = self.orient * self.radius * ang + 0.5 * self.length
        return z, s

    def fermi_direction(self, p):
        q = np.asarray(p, dtype=float) - self.center
        r = np.linalg.norm(q, axis=-1, keepdims=True)
        out = q / np.where(r > 0, r, 1.0)
        return -out if self.to_center else out

    def foot_valid(self, p):
        # Exclude the far side of the circle.
        q = np.asarray(p, dtype=float) - self.center
        ang = np.arctan2(q[..., 1], q[..., 0]) - self._phi_mid
        ang = (ang + math.pi) % (2 * math.pi) - math.pi
        return np.abs(ang) < 0.5 * math.pi

    def plus_side(self, p):
        return self._plus_fn(np.asarray(p, dtype=float))


def _is_right_angle(theta):
    return abs(theta - math.pi / 2) < 1e-12


def find_capillary_curve(dom: PlanarDomain, theta: float, selector: dict) -> CapillaryCurve:
    """Closed-form capillary curve selected from the family of the domain.

    Selectors: {"kind": "segment", "offset": x0, "plus": "right"|"left"} in a
    rectangle (theta = pi/2); {"kind": "arc", "offset": x_end, "bulge":
    "right"|"left"} between the horizontal walls (theta < pi/2);
    {"kind": "chord", "direction": alpha} in the disk, at distance cos(theta).
    """
    if not (np.isfinite(theta) and 0.0 < theta <= math.pi / 2):
        raise DomainError(f"theta={theta!r} outside the admissible range (0, pi/2]")
    kind = selector.get("kind")
    if dom.is_disk:
        if kind != "chord":
            raise GeometricInfeasibilityError("the disk family consists of chords")
        d = 0.0 if _is_right_angle(theta) else math.cos(theta)
        if "distance" in selector and abs(float(selector["distance"]) - d) > 1e-12:
            raise GeometricInfeasibilityError("a straight chord meets the circle at angle theta "
                                              "only at distance cos(theta)")
        alpha = float(selector.get("direction", 0.0))
        n = np.array([math.cos(alpha), math.sin(alpha)])
        half = math.sqrt(1.0 - d * d)
        origin = d * n - half * _rot(n)
        seg = math.acos(d) - d * half
        curve = SegmentCurve(dom, theta, origin, _rot(n), -n, 2 * half, math.pi - seg, seg)
    elif kind == "segment":
        if not _is_right_angle(theta):
            raise GeometricInfeasibilityError("straight segments between parallel walls need theta = pi/2")
        x0 = float(selector["offset"])
        if not 0.0 < x0 < dom.width:
            raise GeometricInfeasibilityError("segment offset outside the rectangle")
        right = selector.get("plus", "right") == "right"
        W, H = dom.width, dom.height
        normal = [1.0, 0.0] if right else [-1.0, 0.0]
        ap, am = ((W - x0) * H, x0 * H) if right else (x0 * H, (W - x0) * H)
        curve = SegmentCurve(dom, theta, [x0, 0.0], [0.0, 1.0], normal, H, ap, am)
    elif kind == "arc":
        if _is_right_angle(theta):
            raise GeometricInfeasibilityError("theta = pi/2 gives a segment, not an arc")
        W, H = dom.width, dom.height
        R = H / (2.0 * math.cos(theta))
        alpha = math.pi / 2 - theta
        xe = float(selector["offset"])
        right = selector.get("bulge", "right") == "right"
        cy = 0.5 * H
        cap = 0.5 * H * math.sqrt(R * R - 0.25 * H * H) + R * R * math.asin(0.5 * H / R)
        if right:
            cx = xe - R * math.sin(theta)
            apex = cx + R
            phi0, orient = -alpha, 1.0
            area_plus = cx * H + cap

            def plus_fn(p, cx=cx):
                v = np.clip(R * R - (p[..., 1] - cy) ** 2, 0, None)
                return p[..., 0] < cx + np.sqrt(v)
        else:
            cx = xe + R * math.sin(theta)
            apex = cx - R
            phi0, orient = math.pi + alpha, -1.0
            area_plus = (W - cx) * H + cap

            def plus_fn(p, cx=cx):
                v = np.clip(R * R - (p[..., 1] - cy) ** 2, 0, None)
                return p[..., 0] > cx - np.sqrt(v)
        if not (0.0 < min(xe, apex) and max(xe, apex) < W):
            raise GeometricInfeasibilityError("arc does not fit between the side walls")
        curve = ArcCurve(dom, theta, [cx, cy], R, phi0, orient, True, 2 * R * alpha,
                         area_plus, dom.area - area_plus, plus_fn)
    else:
        raise GeometricInfeasibilityError(f"unknown selector kind {kind!r}")
    curve.verify()
    return curve


class FermiChart:
    """Twisted Fermi coordinates: Y(z, s) is the time-z flow of X from gamma(s).

    X = (d - a chi V) / sqrt(1 - (2 - chi^2) a^2), a = chi <d, V>, with d the
    Fermi direction, V the extended wall normal and chi = eta(dist to wall).
    """

    def __init__(self, curve: CapillaryCurve, dom: PlanarDomain, tau0: float, eps0: float,
                 n_z: int = 21, n_s: int = 41, rtol: float = 1e-10):
        if not (tau0 > 0 and eps0 > 0):
            raise DomainError("tau0 and eps0 must be positive")
        self.curve = curve
        self.domain = dom
        self.tau0 = float(tau0)
        self.eps0 = float(eps0)
        self.rtol = rtol
        self._check_corners()
        nu0, t0 = curve.nu(0.0), curve.tangent(0.0)
        self._orientation = float(np.sign(nu0[0] * t0[1] - nu0[1] * t0[0]))
        self.z_grid = np.linspace(-self.tau0, self.tau0, n_z)
        self.s_grid = np.linspace(0.0, curve.length, n_s)
        zz, ss = np.meshgrid(self.z_grid, self.s_grid, indexing="ij")
        self.lattice = self.Y(zz.ravel(), ss.ravel()).reshape(n_z, n_s, 2)
        self._splines = [RectBivariateSpline(self.z_grid, self.s_grid, self.lattice[..., k])
                         for k in range(2)]
        jac = self.jacobian(zz.ravel(), ss.ravel())
        if np.any(jac <= 0) or not np.all(dom.inside(self.lattice.reshape(-1, 2), tol=1e-8)):
            raise BandTooWideError("chart is not a diffeomorphism on the band; shrink tau0")

    def _check_corners(self):
        corners = self.domain.corners
        if len(corners) == 0:
            return
        ends = np.array([self.curve.endpoint(0), self.curve.endpoint(1)])
        # X has unit speed along the wall, so the band reaches tau0 from each endpoint.
        dist = np.linalg.norm(ends[:, None, :] - corners[None], axis=-1)
        if np.min(dist) < 2 * self.eps0 + self.tau0:
            raise BandTooWideError("band comes within 2*eps0 of a corner")

    def eta(self, d):
        return 1.0 - smoothstep((np.asarray(d) - 0.5 * self.eps0) / (0.5 * self.eps0))

    def X(self, p):
        p = np.asarray(p, dtype=float)
        d = self.curve.fermi_direction(p)
        V = self.domain.boundary_normal(p)
        chi = self.eta(self.domain.dist_boundary(p))
        a = chi * np.sum(d * V, axis=-1)
        den = np.sqrt(1.0 - (2.0 - chi * chi) * a * a)
        if np.any(den <= 1e-8):
            raise BandTooWideError("wall normal aligns with the Fermi direction")
        return (d - (a * chi)[..., None] * V) / den[..., None]

    def flow(self, p0, z):
        """Integrate dp/dt = X(p) for times z (one per start point)."""
        p0 = np.atleast_2d(np.asarray(p0, dtype=float))
        z = np.broadcast_to(np.asarray(z, dtype=float), p0.shape[:1])
        if p0.size == 0:
            return p0.copy()

        def rhs(_, y):
            return (z[:, None] * self.X(y.reshape(-1, 2))).ravel()

        sol = solve_ivp(rhs, (0.0, 1.0), p0.ravel(), method="RK45", rtol=self.rtol,
                        atol=self.rtol * 1e-2)
        if not sol.success:
            raise BandTooWideError(f"flow integration failed: {sol.message}")
        return sol.y[:, -1].reshape(-1, 2)

    def Y(self, z, s):
        z, s = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(s, dtype=float))
        return self.flow(self.curve.gamma(s.ravel()), z.ravel()).reshape(z.shape + (2,))

    def Y_lattice(self, z, s):
        """Cheap spline evaluation of Y from the precomputed lattice."""
        return np.stack([sp.ev(z, s) for sp in self._splines], axis=-1)

    def inverse(self, p):
        """(z, s, valid) for points p, by flowing back to the curve.

        The backward flow is reparametrized by the extended normal distance,
        which decreases monotonically along -X inside the band.
        """
        p = np.atleast_2d(np.asarray(p, dtype=float))
        z0, s0 = self.curve.fermi(p)
        cot = abs(math.cos(self.curve.theta)) / math.sin(self.curve.theta)
        margin = self.tau0 * (1 + cot) + self.eps0
        valid = ((np.abs(z0) <= self.tau0 * (1 + cot)) & (s0 > -margin)
                 & (s0 < self.curve.length + margin) & self.curve.foot_valid(p))
        z = np.full(len(p), np.nan)
        s = np.full(len(p), np.nan)
        idx = np.flatnonzero(valid)
        if idx.size:
            q0, zt = p[idx], z0[idx]

            def rhs(_, y):
                q = y[:-len(idx)].reshape(-1, 2)
                Xq = self.X(q)
                speed = np.sum(Xq * self.curve.fermi_direction(q), axis=-1)
                speed = np.where(speed > 1e-6, speed, 1e-6)
                dq = -(zt / speed)[:, None] * Xq
                return np.concatenate([dq.ravel(), zt / speed])

            y0 = np.concatenate([q0.ravel(), np.zeros(len(idx))])
            sol = solve_ivp(rhs, (0.0, 1.0), y0, method="RK45", rtol=self.rtol,
                            atol=self.rtol * 1e-2)
            y = sol.y[:, -1]
            foot = y[:-len(idx)].reshape(-1, 2)
            z[idx] = y[-len(idx):]
            s[idx] = self.curve.fermi(foot)[1]
            ok = ((s[idx] > -1e-7) & (s[idx] < self.curve.length + 1e-7)
                  & (np.abs(z[idx]) <= self.tau0 + 1e-12))
            valid[idx] = ok
        return z, s, valid

    def _ds(self):
        return 1e-5 * self.curve.length

    def jacobian(self, z, s):
        """det[dY/dz, dY/ds] with dY/dz = X(Y) and dY/ds by central differences.

        Normalized by the orientation of the frame (nu, tangent), so it equals 1 on the curve.
        """
        z, s = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(s, dtype=float))
        h = self._ds()
        pts = self.Y(z, s)
        ys = (self.Y(z, s + h) - self.Y(z, s - h)) / (2 * h)
        Xp = self.X(pts)
        return self._orientation * (Xp[..., 0] * ys[..., 1] - Xp[..., 1] * ys[..., 0])

    def metric_coeffs(self, z, s):
        """(g_z, H_z): |dY/ds|^2 and the curvature of the level curve, signed
        with respect to the normal pointing in the direction of increasing z."""
        z, s = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(s, dtype=float))
        h = 1e-4 * self.curve.length
        L = self.curve.length
        sc = np.clip(s, h, L - h)
        pm, p0, pp = self.Y(z, sc - h), self.Y(z, sc), self.Y(z, sc + h)
        d1 = (pp - pm) / (2 * h)
        d2 = (pp - 2 * p0 + pm) / h ** 2
        g = np.sum(d1 * d1, axis=-1)
        n = _rot(d1) / np.sqrt(g)[..., None]
        n *= np.sign(np.sum(n * self.X(p0), axis=-1))[..., None]
        return g, np.sum(n * d2, axis=-1) / g


def build_fermi_chart(curve: CapillaryCurve, dom: PlanarDomain, tau0: float, eps0: float) -> FermiChart:
    return FermiChart(curve, dom, tau0, eps0)


@dataclass(frozen=True)
class LevelCurveData:
    z: float
    length: float
    s: np.ndarray
    curvature: np.ndarray
    angles: tuple


def level_curve_data(chart: FermiChart, z: float, n: int = 201) -> LevelCurveData:
    if abs(z) > chart.tau0 + 1e-12:
        raise DomainError("level z outside the chart band")
    L = chart.curve.length
    gx, gw = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, L, 9)
    sq = (0.5 * (edges[1:] + edges[:-1])[:, None] + 0.5 * np.diff(edges)[:, None] * gx).ravel()
    wq = (0.5 * np.diff(edges)[:, None] * gw).ravel()
    g, _ = chart.metric_coeffs(z, sq)
    length = float(np.sum(wq * np.sqrt(g)))
    s = np.linspace(0.0, L, n)
    _, H = chart.metric_coeffs(z, s)
    ends = chart.Y(z, np.array([0.0, L]))
    h = 1e-6 * L
    tang = (chart.Y(z, np.array([h, L])) - chart.Y(z, np.array([0.0, L - h]))) / h
    nrm = _rot(tang) / np.linalg.norm(tang, axis=-1, keepdims=True)
    nrm *= np.sign(np.sum(nrm * chart.X(ends), axis=-1))[:, None]
    vw = chart.domain.boundary_normal(ends)
    angles = tuple(float(math.acos(np.clip(-nrm[k] @ vw[k], -1, 1))) for k in range(2))
    return LevelCurveData(float(z), length, s, H, angles)
