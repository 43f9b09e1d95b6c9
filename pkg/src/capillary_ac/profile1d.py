"""Heteroclinic profile, band projection and the linearized 1-D operator."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.sparse import diags
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import DegenerateWellError, NumericError
from .potential import DoubleWell, QuarticWell

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def _time_of(w: DoubleWell, u, a, b):
    """t(u) = int_0^u ds / sqrt(2W), with the logarithmic singularities split off."""
    u = np.asarray(u, dtype=float)

    def regular(s):
        return 1.0 / w.root2w(s) - a / (1.0 - s) - b / (1.0 + s)

    x = 0.5 * u[..., None] * (_GL_X + 1.0)
    rest = 0.5 * u * np.sum(regular(x) * _GL_W, axis=-1)
    return -a * np.log1p(-u) + b * np.log1p(u) + rest


def _invert(w, t, a, b, iters=100):
    """Solve t(u) = t for u in (-1, 1) by bracketed Newton, vectorized."""
    t = np.asarray(t, dtype=float)
    lo = np.full_like(t, -1.0)
    hi = np.full_like(t, 1.0)
    u = np.tanh(t / (a + b))
    for _ in range(iters):
        f = _time_of(w, u, a, b) - t
        lo = np.where(f < 0, u, lo)
        hi = np.where(f > 0, u, hi)
        step = f * w.root2w(u)
        new = u - step
        bad = ~((new > lo) & (new < hi))
        new = np.where(bad, 0.5 * (lo + hi), new)
        if np.all(np.abs(new - u) <= 1e-16 * (1.0 + np.abs(t))) and np.all(np.abs(f) < 1e-12):
            return new
        u = new
    f = _time_of(w, u, a, b) - t
    if np.max(np.abs(f)) > 1e-10:
        raise NumericError("profile inversion did not converge")
    return u


@dataclass(frozen=True)
class HeteroclinicProfile:
    well: DoubleWell
    t_nodes: np.ndarray
    u_nodes: np.ndarray
    tail_cut: float
    decay: tuple
    c: float = 0.0
    _spline: CubicHermiteSpline = field(default=None, repr=False)

    def _tails(self, t):
        gp, gm = self.decay
        T = self.tail_cut
        ap = 1.0 - self.u_nodes[-1]
        am = 1.0 + self.u_nodes[0]
        ep = ap * np.exp(-gp * (np.maximum(t, T) - T))
        em = am * np.exp(gm * (np.minimum(t, -T) + T))
        return ep, em

    def u1(self, t):
        t = np.asarray(t, dtype=float)
        ep, em = self._tails(t)
        inner = self._spline(np.clip(t, -self.tail_cut, self.tail_cut))
        return np.where(t > self.tail_cut, 1.0 - ep, np.where(t < -self.tail_cut, -1.0 + em, inner))

    def du1(self, t):
        t = np.asarray(t, dtype=float)
        gp, gm = self.decay
        ep, em = self._tails(t)
        inner = self.well.root2w(self.u1(np.clip(t, -self.tail_cut, self.tail_cut)))
        return np.where(t > self.tail_cut, gp * ep, np.where(t < -self.tail_cut, gm * em, inner))

    def ddu1(self, t):
        t = np.asarray(t, dtype=float)
        gp, gm = self.decay
        ep, em = self._tails(t)
        inner = self.well.d1(self.u1(np.clip(t, -self.tail_cut, self.tail_cut)))
        return np.where(t > self.tail_cut, -gp * gp * ep,
                        np.where(t < -self.tail_cut, gm * gm * em, inner))

    def first_integral_residual(self, t=None):
        t = self.t_nodes if t is None else np.asarray(t, dtype=float)
        return 0.5 * self.du1(t) ** 2 - self.well.value(self.u1(t))

    def u_eps(self, z, eps):
        return self.u1(np.asarray(z) / eps)

    def udot_eps(self, z, eps):
        """u1'(z/eps): the unscaled derivative evaluated at the stretched variable."""
        return self.du1(np.asarray(z) / eps)


def solve_profile(w: DoubleWell, dt: float = 0.01, tail_cut: float | None = None,
                  check_closed_form: bool = True) -> HeteroclinicProfile:
    d2p, d2m = float(w.d2(1.0)), float(w.d2(-1.0))
    if min(abs(d2p), abs(d2m)) < 1e-8:
        raise DegenerateWellError("W''(+-1) below 1e-8")
    gp, gm = math.sqrt(d2p), math.sqrt(d2m)
    T = 12.0 / min(gp, gm) if tail_cut is None else float(tail_cut)
    n = int(math.ceil(T / dt))
    t = np.linspace(-T, T, 2 * n + 1)
    u = _invert(w, t, 1.0 / gp, 1.0 / gm)
    spline = CubicHermiteSpline(t, u, w.root2w(u))
    prof = HeteroclinicProfile(w, t, u, T, (gp, gm), 0.0, spline)

    # c = int (u1')^2 dt: Gauss panels on the table plus exact exponential tails.
    gx, gw = np.polynomial.legendre.leggauss(8)
    mid = 0.5 * (t[1:] + t[:-1])
    half = 0.5 * np.diff(t)
    pts = mid[:, None] + half[:, None] * gx
    core = float(np.sum(half[:, None] * gw * prof.du1(pts) ** 2))
    ap, am = 1.0 - u[-1], 1.0 + u[0]
    c = core + 0.5 * gp * ap ** 2 + 0.5 * gm * am ** 2
    prof = HeteroclinicProfile(w, t, u, T, (gp, gm), c, spline)

    if check_closed_form and isinstance(w, QuarticWell):
        probe = np.linspace(-10.0, 10.0, 4001)
        err = np.max(np.abs(prof.u1(probe) - w.profile_closed_form(probe)))
        if err > 1e-8:
            raise NumericError(f"generic profile deviates from closed form by {err:.2e}")
    return prof


class BandProjection:
    """Pi(f) = (1/(eps c)) int f(t) u1'(t/eps) dt on a composite Gauss rule.

    c is taken from the same rule, so Pi(u1'(./eps)) = 1 holds exactly.
    """

    def __init__(self, epsilon: float, profile: HeteroclinicProfile,
                 half_width: float | None = None, panel: float = 0.25, order: int = 8):
        self.epsilon = float(epsilon)
        self.profile = profile
        R = 40.0 / min(profile.decay) if half_width is None else half_width
        m = int(math.ceil(2 * R / panel))
        edges = np.linspace(-R, R, m + 1)
        gx, gw = np.polynomial.legendre.leggauss(order)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * np.diff(edges)
        tau = (mid[:, None] + half[:, None] * gx).ravel()
        wts = (half[:, None] * gw).ravel()
        self.nodes = self.epsilon * tau
        self.weights = self.epsilon * wts
        self.udot = profile.du1(tau)
        self.c = float(np.sum(self.weights * self.udot ** 2)) / self.epsilon

    def _values(self, f):
        if callable(f):
            return np.asarray(f(self.nodes), dtype=float)
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.nodes.size:
            raise ValueError("array input must be sampled on the projection nodes")
        return f

    def project(self, f):
        vals = self._values(f)
        return np.sum(vals * self.weights * self.udot, axis=-1) / (self.epsilon * self.c)

    def project_perp(self, f):
        a = self.project(f)
        if callable(f):
            eps, prof = self.epsilon, self.profile
            return lambda t: f(t) - a * prof.du1(np.asarray(t) / eps)
        return self._values(f) - np.multiply.outer(a, self.udot)


def project_pi(f, bp: BandProjection):
    return bp.project(f)


def project_pi_perp(f, bp: BandProjection):
    return bp.project_perp(f)


@dataclass(frozen=True)
class L0Spectrum:
    lambda0: float
    mu1: float
    eigvec0: np.ndarray
    grid: np.ndarray
    cosine: float
    kernel_gap: tuple


def _l0_matrix(profile, L, n):
    h = 2.0 * L / (n + 1)
    x = -L + h * np.arange(1, n + 1)
    diag = 2.0 / h ** 2 + profile.well.d2(profile.u1(x))
    off = np.full(n - 1, -1.0 / h ** 2)
    return x, diag, off


def spectrum_L0(w: DoubleWell, domain_half_width: float | None = None, n_grid: int = 4096,
                profile: HeteroclinicProfile | None = None) -> L0Spectrum:
    """Lowest eigenpair of -d^2 + W''(u1) and the deflated eigenvalue mu1.

    Second-order differences, Dirichlet truncation at +-domain_half_width.
    mu1 is the lowest eigenvalue of the quadratic form restricted to the
    discrete orthogonal complement of u1'.
    """
    profile = profile or solve_profile(w)
    gmin = min(profile.decay)
    L = 12.0 / gmin if domain_half_width is None else float(domain_half_width)
    if L < 10.0 / gmin - 1e-12:
        raise ValueError("domain_half_width must be at least 10/min(gamma)")
    if n_grid < 512:
        raise ValueError("n_grid must be at least 512")
    x, diag, off = _l0_matrix(profile, L, n_grid)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, 1))
    lam0, psi0 = float(vals[0]), vecs[:, 0]
    v = profile.du1(x)
    v = v / np.linalg.norm(v)
    cosine = abs(float(psi0 @ v))

    # Deflation: the search space is kept orthogonal to u1'.
    A = diags([off, diag, off], [-1, 0, 1], format="csr")
    ab = np.zeros((3, n_grid))
    ab[0, 1:] = off
    ab[1] = diag + 1.0
    ab[2, :-1] = off
    precond = LinearOperator((n_grid, n_grid), dtype=float,
                             matvec=lambda r: solve_banded((1, 1), ab, r),
                             matmat=lambda R: solve_banded((1, 1), ab, R))
    X0 = np.random.default_rng(0).standard_normal((n_grid, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        mu, _ = lobpcg(A, X0, Y=v[:, None], M=precond, largest=False, tol=1e-9, maxiter=200)
    mu1 = float(np.min(mu))
    if not np.isfinite(mu1):
        raise NumericError("deflated eigensolve failed")
    sv = np.sort(np.abs(vals))
    return L0Spectrum(lam0, mu1, psi0, x, cosine, (float(sv[0]), float(sv[1])))
