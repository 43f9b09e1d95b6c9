"""Bordered Newton solver for the mass-constrained problem and continuation in epsilon."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import bmat, csc_matrix, diags
from scipy.sparse.linalg import MatrixRankWarning, eigsh, splu

from .approx import ApproxSolution, build_approx, build_cutoffs
from .errors import ConvergenceError, DegenerateLinearizationError
from .fem import FemSystem
from .mesh import NodalField, TriangularMesh, make_mesh
from .potential import DoubleWell, WettingDensity

log = logging.getLogger(__name__)

SINGULAR_FLOOR = 1e-6
# The scaled bordered Jacobian has its smallest eigenvalue near eps^2 times the
# first constrained Jacobi eigenvalue; far below that signals a near-kernel.
NEAR_KERNEL_RATIO = 0.05
DAMPING_FLOOR = 2.0 ** -10


@dataclass
class SolverState:
    u: NodalField
    lam: float
    residual_norm: float
    newton_iters: int
    epsilon: float
    history: list = field(default_factory=list)
    mass_error: float = 0.0
    smallest_eigenvalue: float | None = None

    @property
    def near_singular(self):
        return (self.smallest_eigenvalue is not None
                and _near_singular(self.smallest_eigenvalue, self.epsilon))


def _near_singular(value, eps):
    return value < max(SINGULAR_FLOOR, NEAR_KERNEL_RATIO * eps ** 2)


def assemble_residual(u, lam, mesh: TriangularMesh, pot: DoubleWell, wet: WettingDensity,
                      epsilon: float, mass_target: float = 0.0, fem: FemSystem | None = None):
    """Weak-form residual per hat function and the constraint value int u - mass_target.

    R_i = eps^2 int grad u . grad phi_i + int W'(u) phi_i - eps lam int phi_i
          + eps int_boundary sigma'(u) phi_i
    """
    fem = fem or FemSystem(mesh)
    u = np.asarray(u, dtype=float)
    vec = (epsilon ** 2 * (fem.stiffness @ u) + fem.bulk(u, pot.d1)
           - epsilon * lam * fem.lumped_mass + epsilon * fem.boundary(u, wet.sigma1))
    return vec, float(fem.lumped_mass @ u - mass_target)


def _jacobian(u, mesh, pot, wet, eps, fem):
    _, mbulk = fem.bulk(u, pot.d1, pot.d2)
    _, mbdry = fem.boundary(u, wet.sigma1, wet.sigma2)
    return (eps ** 2 * fem.stiffness + mbulk + eps * mbdry).tocsr()


def _bordered(A, m, eps):
    """Symmetric bordered matrix: the constraint row is scaled by -eps."""
    col = csc_matrix(-eps * m[:, None])
    return bmat([[A, col], [col.T, None]], format="csc")


def _norm(R, g, m):
    return max(float(np.max(np.abs(R / m))), abs(g))


def smallest_bordered_eigenvalue(A, m, eps, area):
    """Smallest |eigenvalue| of the bordered Jacobian after symmetric diagonal scaling."""
    d = np.concatenate([1.0 / np.sqrt(m), [1.0 / (eps * math.sqrt(area))]])
    S = diags(d) @ _bordered(A, m, eps) @ diags(d)
    try:
        val = eigsh(S.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False,
                    v0=np.ones(S.shape[0]))
    except RuntimeError:
        return 0.0
    return float(abs(val[0]))


def newton_solve(init: ApproxSolution | NodalField, mesh: TriangularMesh, pot: DoubleWell,
                 wet: WettingDensity, epsilon: float, mass_target: float, lam0: float | None = None,
                 tol: float = 1e-10, max_iter: int = 30, check_singular: bool = True) -> SolverState:
    """Damped Newton on (u, lam) for the residual and the linear mass row.

    Residual norm: max(sup |R_i / m_i|, |int u - mass_target|). Backtracking
    halves the step down to 2^-10 until the norm decreases.
    """
    if isinstance(init, ApproxSolution):
        u = init.field.values.copy()
        lam = init.lambda_guess if lam0 is None else float(lam0)
    else:
        u = init.values.copy()
        lam = 0.0 if lam0 is None else float(lam0)
    fem = FemSystem(mesh)
    m = fem.lumped_mass
    n = mesh.n_nodes
    # Project onto the constraint first so every later step keeps it exactly.
    u = u + (mass_target - m @ u) / m.sum()
    R, g = assemble_residual(u, lam, mesh, pot, wet, epsilon, mass_target, fem)
    res = _norm(R, g, m)
    history = [res]
    it = 0
    A = None
    def fail(msg):
        lo = smallest_bordered_eigenvalue(_jacobian(u, mesh, pot, wet, epsilon, fem), m, epsilon,
                                          float(m.sum()))
        if _near_singular(lo, epsilon):
            return DegenerateLinearizationError(
                f"{msg}; the scaled bordered Jacobian has eigenvalue {lo:.3e} (near kernel)", epsilon)
        return ConvergenceError(msg, history, epsilon)

    while res > tol:
        if it >= max_iter:
            raise fail(f"no convergence in {max_iter} Newton steps (residual {res:.3e})")
        A = _jacobian(u, mesh, pot, wet, epsilon, fem)
        J = _bordered(A, m, epsilon)
        rhs = -np.concatenate([R, [-epsilon * g]])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", MatrixRankWarning)
                step = splu(J).solve(rhs)
        except (RuntimeError, MatrixRankWarning) as exc:
            raise DegenerateLinearizationError(f"bordered Jacobian is singular: {exc}", epsilon) from exc
        if not np.all(np.isfinite(step)):
            raise DegenerateLinearizationError("bordered Jacobian is singular to working precision", epsilon)
        du, dlam = step[:n], step[n]
        alpha = 1.0
        while True:
            u_new, lam_new = u + alpha * du, lam + alpha * dlam
            R_new, g_new = assemble_residual(u_new, lam_new, mesh, pot, wet, epsilon, mass_target, fem)
            res_new = _norm(R_new, g_new, m)
            if res_new < res or alpha <= DAMPING_FLOOR:
                break
            alpha *= 0.5
        if res_new >= res and res_new > tol:
            raise fail(f"line search stalled at residual {res:.3e}")
        u, lam, R, g, res = u_new, lam_new, R_new, g_new, res_new
        history.append(res)
        it += 1
        log.debug("eps=%g newton %d residual %.3e step %.3g", epsilon, it, res, alpha)
    smallest = None
    if check_singular:
        A = _jacobian(u, mesh, pot, wet, epsilon, fem)
        smallest = smallest_bordered_eigenvalue(A, m, epsilon, float(m.sum()))
    return SolverState(NodalField(mesh, u), float(lam), res, it, float(epsilon), history,
                       float(m @ u - mass_target), smallest)


def quadratic_tail_constants(history, floor=1e-11):
    """r_{k+1} / r_k^2 over the last three steps, skipping steps that land at round-off."""
    pairs = list(zip(history, history[1:]))[-3:]
    return [b / a ** 2 for a, b in pairs if b > floor]


def sweep_mesh(cfg, curve, eps):
    """Mesh for one sweep point: h_fine = min(h, eps h_over_eps) in a band around the curve."""
    dom = curve.domain
    fine = min(cfg.h, eps * cfg.h_over_eps)
    if dom.is_disk or not cfg.band_refine:
        return make_mesh(dom, fine)
    xs = curve.gamma(np.linspace(0.0, curve.length, 257))[:, 0]
    width = 2.0 * eps ** cfg.delta_star
    return make_mesh(dom, cfg.h, band=(xs.min() - width, xs.max() + width, fine))


def continuation_sweep(cfg, setup=None, on_state=None):
    """Solve for each epsilon of a decreasing schedule.

    Each point starts from the glued approximate solution at the new epsilon
    (or the previous field resampled, with warm_start="resample") and from the
    previous multiplier. Returns a list of (SolverState, record dict).
    """
    from .diagnostics import energy, nodal_set, hausdorff_to_curve, contact_angle

    setup = setup or cfg.build()
    pot, wet, prof, curve, chart = setup.pot, setup.wet, setup.profile, setup.curve, setup.chart
    target = curve.area_plus - curve.area_minus
    out = []
    prev = None
    for eps in cfg.epsilons:
        mesh = sweep_mesh(cfg, curve, eps)
        cf = build_cutoffs(eps, cfg.delta_star, cfg.tau0)
        apx = build_approx(prof, chart, cf, mesh, coords=cfg.coords, c_star=setup.consts.c_star)
        lam0 = apx.lambda_guess if prev is None else prev.lam
        init = apx
        if cfg.warm_start == "resample" and prev is not None:
            init = NodalField(mesh, prev.u.interpolate(mesh.nodes))
        try:
            st = newton_solve(init, mesh, pot, wet, eps, target, lam0=lam0, tol=cfg.tol,
                              max_iter=cfg.max_iter)
        except (ConvergenceError, DegenerateLinearizationError) as exc:
            exc.epsilon = eps
            raise
        poly = nodal_set(st.u)
        angles = [math.nan, math.nan]
        for end, ang in contact_angle(poly, curve.domain, curve).items():
            angles[end] = ang
        rec = {"epsilon": eps, "lambda": st.lam, "energy": energy(st.u, eps, pot, wet),
               "hausdorff": hausdorff_to_curve(poly, curve), "angle_left": angles[0],
               "angle_right": angles[1], "iters": st.newton_iters,
               "residual": st.residual_norm, "mass_error": st.mass_error,
               "n_nodes": mesh.n_nodes, "h": mesh.h,
               "smallest_eigenvalue": st.smallest_eigenvalue}
        log.info("eps=%g lambda=%.6g iters=%d", eps, st.lam, st.newton_iters)
        out.append((st, rec))
        if on_state is not None:
            on_state(st, rec)
        prev = st
    return out
