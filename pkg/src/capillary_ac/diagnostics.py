"""Energy, nodal sets, contact angles, Hausdorff distances and expansion fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyNodalSetError, FitError, NotApplicableError
from .fem import FemSystem
from .geometry import CapillaryCurve, PlanarDomain
from .mesh import NodalField
from .potential import DoubleWell, WellConstants, WettingDensity

ZERO_NUDGE = 1e-12


def energy(u: NodalField, epsilon: float, pot: DoubleWell, wet: WettingDensity,
           fem: FemSystem | None = None) -> float:
    """int (eps/2)|grad u|^2 + W(u)/eps over the mesh plus int sigma(u) over the boundary."""
    fem = fem or FemSystem(u.mesh)
    v = u.values
    grad = 0.5 * epsilon * float(v @ (fem.stiffness @ v))
    return grad + fem.bulk_integral(v, pot.value) / epsilon + fem.boundary_integral(v, wet.sigma)


@dataclass
class NodalPolyline:
    """Zero level set as polylines with the positive phase on the left."""

    components: list
    endpoint_kinds: list  # per component: (start, end) in {"boundary", "interior", "closed"}

    @property
    def length(self):
        return float(sum(np.sum(np.linalg.norm(np.diff(c, axis=0), axis=1)) for c in self.components))

    @property
    def vertices(self):
        return np.concatenate(self.components)

    def boundary_endpoints(self):
        """(component index, 0 for start or 1 for end, point)."""
        out = []
        for k, (c, kinds) in enumerate(zip(self.components, self.endpoint_kinds)):
            for j, kind in enumerate(kinds):
                if kind == "boundary":
                    out.append((k, j, c[0] if j == 0 else c[-1]))
        return out


def nodal_set(u: NodalField) -> NodalPolyline:
    """Marching triangles on the P1 field.

    Values within 1e-12 of zero (exact zeros and round-off around them) are
    set to +1e-12 so every crossing lies strictly inside an edge.
    """
    mesh = u.mesh
    v = np.where(np.abs(u.values) < ZERO_NUDGE, ZERO_NUDGE, u.values)
    tri = mesh.triangles
    pos = v[tri] > 0
    npos = pos.sum(axis=1)
    cut = np.flatnonzero((npos == 1) | (npos == 2))
    if cut.size == 0:
        raise EmptyNodalSetError("u does not change sign")
    p = mesh.nodes
    grads = u.gradients()
    # Each cut triangle contributes one segment between its two sign-changing edges.
    seg_edges = []
    seg_pts = []
    for t in cut:
        a = tri[t]
        ends = []
        pts = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            vi, vj = v[a[i]], v[a[j]]
            if (vi > 0) != (vj > 0):
                w = vi / (vi - vj)
                pts.append(p[a[i]] + w * (p[a[j]] - p[a[i]]))
                ends.append((min(a[i], a[j]), max(a[i], a[j])))
        d = pts[1] - pts[0]
        if grads[t] @ np.array([-d[1], d[0]]) < 0:
            pts.reverse()
            ends.reverse()
        seg_edges.append(ends)
        seg_pts.append(pts)
    # Directed graph on crossing edges: segment k goes from seg_edges[k][0] to seg_edges[k][1].
    succ = {}
    pred = {}
    point_of = {}
    for k, (e, q) in enumerate(zip(seg_edges, seg_pts)):
        succ[e[0]] = k
        pred[e[1]] = k
        point_of[e[0]], point_of[e[1]] = q[0], q[1]
    boundary = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
    used = np.zeros(len(seg_edges), dtype=bool)
    comps, kinds = [], []
    starts = sorted(e for e in succ if e not in pred)
    order = starts + sorted(e for e in succ if e in pred)
    for e0 in order:
        k = succ[e0]
        if used[k]:
            continue
        chain = [point_of[e0]]
        e = e0
        closed = False
        while e in succ and not used[succ[e]]:
            k = succ[e]
            used[k] = True
            e = seg_edges[k][1]
            chain.append(point_of[e])
            if e == e0:
                closed = True
                break
        comps.append(np.array(chain))
        if closed:
            kinds.append(("closed", "closed"))
        else:
            kinds.append(tuple("boundary" if x in boundary else "interior" for x in (e0, e)))
    return NodalPolyline(comps, kinds)


def _tangent_fit(pts):
    """Least-squares direction of a short vertex run, oriented along the run."""
    c = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(c)
    d = vt[0]
    if d @ (pts[-1] - pts[0]) < 0:
        d = -d
    return d


def contact_angle(p: NodalPolyline, dom: PlanarDomain, curve: CapillaryCurve | None = None,
                  n_fit: int = 5) -> dict:
    """Angle arccos(-<nu_plus, nu_wall>) at every boundary endpoint.

    nu_plus is the normal of the least-squares tangent of the last n_fit
    vertices that points into {u > 0}. Keys are endpoint indices of the
    given curve (nearest endpoint) or a running index without a curve.
    """
    ends = p.boundary_endpoints()
    if not ends:
        raise NotApplicableError("no polyline endpoint lies on the boundary")
    out = {}
    for idx, (k, j, q) in enumerate(ends):
        c = p.components[k]
        if len(c) < 3:
            raise NotApplicableError("fewer than 3 vertices near the endpoint")
        run = c[:n_fit] if j == 0 else c[-n_fit:]
        d = _tangent_fit(run)
        nu_plus = np.array([-d[1], d[0]])  # positive phase on the left of the travel direction
        wall = dom.boundary_normal(q)
        ang = math.acos(float(np.clip(-nu_plus @ wall, -1.0, 1.0)))
        key = idx
        if curve is not None:
            key = int(np.argmin([np.linalg.norm(q - curve.endpoint(e)) for e in (0, 1)]))
        out[key] = ang
    return out


def _distance_to_segments(q, a, b, chunk=2048):
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    out = np.empty(len(q))
    for k in range(0, len(q), chunk):
        x = q[k:k + chunk, None, :] - a[None]
        t = np.clip(np.einsum("qsj,sj->qs", x, d) / dd, 0.0, 1.0)
        out[k:k + chunk] = np.min(np.linalg.norm(x - t[..., None] * d, axis=-1), axis=1)
    return out


def hausdorff_to_curve(p: NodalPolyline, curve: CapillaryCurve, n: int = 4001) -> float:
    """Hausdorff distance between the polyline (as segments) and the densely sampled curve."""
    b = curve.gamma(np.linspace(0.0, curve.length, n))
    seg_a = np.concatenate([c[:-1] for c in p.components])
    seg_b = np.concatenate([c[1:] for c in p.components])
    to_poly = float(np.max(_distance_to_segments(b, seg_a, seg_b)))
    v = p.vertices
    z, s = curve.fermi(v)
    ends = np.min(np.linalg.norm(v[:, None, :] - b[[0, -1]][None], axis=-1), axis=1)
    onfoot = (s >= 0.0) & (s <= curve.length) & curve.foot_valid(v)
    to_curve = float(np.max(np.where(onfoot, np.abs(z), ends)))
    return max(to_poly, to_curve)


def wetted_lengths(curve: CapillaryCurve, n: int = 200_000):
    """Boundary length on the plus and minus sides of the curve."""
    dom = curve.domain
    if dom.is_disk:
        ang = 2 * math.pi * (np.arange(n) + 0.5) / n
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        per = dom.perimeter
        s = per * (np.arange(n) + 0.5) / n
        W, H = dom.width, dom.height
        x = np.select([s < W, s < W + H, s < 2 * W + H], [s, W, 2 * W + H - s], 0.0)
        y = np.select([s < W, s < W + H, s < 2 * W + H], [0.0, s - W, H], per - s)
        pts = np.stack([x, y], axis=1)
    plus = curve.plus_side(pts)
    step = dom.perimeter / n
    return float(plus.sum() * step), float((~plus).sum() * step)


def _linfit(x, y):
    """Least squares y = b0 + b1 x with standard errors and externally studentized residuals."""
    X = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    dof = len(x) - 2
    s2 = float(r @ r) / dof if dof > 0 else math.nan
    cov = s2 * np.linalg.inv(X.T @ X)
    hat = np.einsum("ij,jk,ik->i", X, np.linalg.inv(X.T @ X), X)
    # Externally studentized: each point is scaled by the variance of the fit without it.
    with np.errstate(divide="ignore", invalid="ignore"):
        s2_del = (dof * s2 - r * r / (1.0 - hat)) / (dof - 1)
        stud = r / np.sqrt(np.maximum(s2_del, 0.0) * (1.0 - hat))
    return coef, np.sqrt(np.diag(cov)), r, stud


@dataclass
class ExpansionFit:
    epsilon: np.ndarray
    samples: dict
    lambda0: float
    lambda1: float
    lambda0_stderr: float
    lambda_ratio: float | None
    lambda_expected: float
    dropped: list
    energy_model: str
    energy_coeff: float
    energy_coeff_stderr: float
    energy_power: int
    energy_power_fit: float
    energy_power_stderr: float
    energy_residual_ratio: float
    energy_expected: float
    angle_slope: float | None
    angle_slope_stderr: float | None
    hausdorff_slope: float | None
    hausdorff_slope_stderr: float | None
    details: dict = field(default_factory=dict)

    def summary(self):
        def f(x):
            return None if x is None or not np.isfinite(x) else float(x)
        return {"lambda0": f(self.lambda0), "lambda0_stderr": f(self.lambda0_stderr),
                "lambda1": f(self.lambda1), "lambda_ratio": f(self.lambda_ratio),
                "lambda_expected": f(self.lambda_expected), "dropped_epsilons": self.dropped,
                "energy_model": self.energy_model, "energy_coeff": f(self.energy_coeff),
                "energy_coeff_stderr": f(self.energy_coeff_stderr),
                "energy_expected": f(self.energy_expected),
                "energy_power": self.energy_power, "energy_power_fit": f(self.energy_power_fit),
                "energy_power_stderr": f(self.energy_power_stderr),
                "energy_residual_ratio": f(self.energy_residual_ratio),
                "angle_slope": f(self.angle_slope), "hausdorff_slope": f(self.hausdorff_slope)}


def _loglog(eps, y):
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 3:
        return None, None
    coef, se, _, _ = _linfit(np.log(eps[ok]), np.log(y[ok]))
    return float(coef[1]), float(se[1])


def fit_expansions(records, curve: CapillaryCurve, consts: WellConstants) -> ExpansionFit:
    """Fit lambda(eps) = l0 + l1 eps and select the leading energy model.

    Energy models: A = a0 + a1 eps (order-one leading term) against
    B = b1 eps + b2 eps^2 (leading term carrying an extra eps). The
    continuous power p of E = a eps^p + b eps is fitted as a cross-check.
    The largest epsilon is dropped from the lambda fit when its studentized
    residual exceeds 3.
    """
    if len(records) < 4:
        raise FitError(f"need at least 4 sweep points, got {len(records)}")
    recs = sorted(records, key=lambda r: -r["epsilon"])
    eps = np.array([r["epsilon"] for r in recs], dtype=float)
    lam = np.array([r["lambda"] for r in recs], dtype=float)
    en = np.array([r["energy"] for r in recs], dtype=float)

    coef, se, _, stud = _linfit(eps, lam)
    dropped = []
    if len(eps) > 4 and abs(stud[0]) > 3:
        dropped.append(float(eps[0]))
        coef, se, _, _ = _linfit(eps[1:], lam[1:])
    l0, l1 = float(coef[0]), float(coef[1])
    expected = 0.5 * consts.c_star * curve.kappa
    ratio = l0 / expected if expected != 0 else None

    ca, sa, ra, _ = _linfit(eps, en)
    XB = np.stack([eps, eps ** 2], axis=1)
    cb, *_ = np.linalg.lstsq(XB, en, rcond=None)
    rb = en - XB @ cb
    rss_a, rss_b = float(ra @ ra), float(rb @ rb)
    ratio_e = rss_b / rss_a if rss_a > 0 else math.inf
    model = "A" if rss_a <= rss_b else "B"
    power, power_se = _power_fit(eps, en)
    wp, wm = wetted_lengths(curve)
    # sigma(-1) = 0 and sigma(1) = c0 cos(theta) in the gauge of the wetting density.
    e_expected = consts.c_star * curve.length + consts.c0 * _cos(curve.theta) * wp

    theta = curve.theta
    ang_err = np.array([np.nanmax([abs(r["angle_left"] - theta), abs(r["angle_right"] - theta)])
                        if np.any(np.isfinite([r["angle_left"], r["angle_right"]])) else np.nan
                        for r in recs])
    a_slope, a_se = _loglog(eps, ang_err)
    haus = np.array([r["hausdorff"] for r in recs], dtype=float)
    h_slope, h_se = _loglog(eps, haus)
    return ExpansionFit(eps, {"lambda": lam, "energy": en, "angle_error": ang_err, "hausdorff": haus},
                        l0, l1, float(se[0]), ratio, expected, dropped,
                        model, float(ca[0]) if model == "A" else float(cb[0]),
                        float(sa[0]), 0 if model == "A" else 1, power, power_se, ratio_e,
                        e_expected, a_slope, a_se, h_slope, h_se,
                        {"rss_A": rss_a, "rss_B": rss_b, "coef_A": ca.tolist(), "coef_B": cb.tolist(),
                         "wetted_plus": wp, "wetted_minus": wm})


def _cos(theta):
    return 0.0 if theta == math.pi / 2 else math.cos(theta)


def _power_fit(eps, en):
    """Fit E = a eps^p + b eps by profiling the residual over p."""
    def rss(p):
        X = np.stack([eps ** p, eps], axis=1)
        c, *_ = np.linalg.lstsq(X, en, rcond=None)
        r = en - X @ c
        return float(r @ r)
    grid = np.linspace(-0.5, 0.9, 1401)
    vals = np.array([rss(p) for p in grid])
    k = int(np.argmin(vals))
    p = float(grid[k])
    # Curvature of the profile gives a Gauss-Newton standard error.
    n = len(eps)
    s2 = vals[k] / max(n - 3, 1)
    if 0 < k < len(grid) - 1:
        d2 = (vals[k + 1] - 2 * vals[k] + vals[k - 1]) / (grid[1] - grid[0]) ** 2
        se = math.sqrt(2 * s2 / d2) if d2 > 0 else math.nan
    else:
        se = math.nan
    return p, se
