"""Double-well potentials, wetting density and derived constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import (DegenerateWellError, DomainError, QuadratureError,
                     RejectedInputError)

WELLS = (-1.0, 1.0)
# Sample range a tabulated well must cover (wetting table range plus margin).
TABLE_RANGE = 1.2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _finite(s):
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise RejectedInputError("non-finite argument")
    return s


def _gauss_integral(f, a, b):
    """Integrate f over [a, b] elementwise (a, b arrays) with 24-point Gauss."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[..., None] + half[..., None] * _GL_X
    return half * np.sum(f(x) * _GL_W, axis=-1)


class DoubleWell:
    """Base class: W, W', W'' and the signed root sqrt(2W).

    ``root2w`` is the smooth extension of sqrt(2W) that changes sign at the
    wells, so it is positive on (-1, 1) and negative outside.
    """

    wells = WELLS
    kind = "abstract"

    def value(self, s):
        raise NotImplementedError

    def d1(self, s):
        raise NotImplementedError

    def d2(self, s):
        raise NotImplementedError

    def root2w(self, s):
        raise NotImplementedError

    def root2w_prime(self, s):
        raise NotImplementedError

    @property
    def gamma(self):
        return math.sqrt(float(self.d2(1.0))), math.sqrt(float(self.d2(-1.0)))

    def descriptor(self) -> dict:
        raise NotImplementedError

    def __call__(self, s):
        return self.value(s)


class QuarticWell(DoubleWell):
    """W(s) = scale * (1 - s^2)^2 / 4."""

    kind = "quartic"

    def __init__(self, scale: float = 1.0):
        if not (np.isfinite(scale) and scale > 0):
            raise RejectedInputError("scale must be positive and finite")
        self.scale = float(scale)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.scale * (1.0 - s * s) ** 2 / 4.0

    def d1(self, s):
        s = np.asarray(s, dtype=float)
        return -self.scale * s * (1.0 - s * s)

    def d2(self, s):
        s = np.asarray(s, dtype=float)
        return self.scale * (3.0 * s * s - 1.0)

    def root2w(self, s):
        s = np.asarray(s, dtype=float)
        return math.sqrt(self.scale / 2.0) * (1.0 - s * s)

    def root2w_prime(self, s):
        s = np.asarray(s, dtype=float)
        return -math.sqrt(2.0 * self.scale) * s

    def profile_closed_form(self, t):
        return np.tanh(np.asarray(t, dtype=float) * math.sqrt(self.scale / 2.0))

    def descriptor(self):
        if self.scale == 1.0:
            return {"kind": "quartic"}
        return {"kind": "quartic", "scale": self.scale}


class TabulatedWell(DoubleWell):
    """Well given by samples (s, W(s)).

    The samples are factored as W = (1 - s^2)^2 g(s) and g is splined, so the
    wells are exact double zeros and W''(+-1) = 8 g(+-1).
    """

    kind = "table"

    def __init__(self, samples):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 8:
            raise RejectedInputError("samples must be a list of at least 8 [s, W] pairs")
        if not np.all(np.isfinite(arr)):
            raise RejectedInputError("non-finite sample")
        arr = arr[np.argsort(arr[:, 0])]
        s, w = arr[:, 0], arr[:, 1]
        if np.any(np.diff(s) <= 0):
            raise RejectedInputError("sample abscissae must be distinct")
        if s[0] > -TABLE_RANGE or s[-1] < TABLE_RANGE:
            raise RejectedInputError(f"samples must cover [-{TABLE_RANGE}, {TABLE_RANGE}]")
        at_well = np.abs(np.abs(s) - 1.0) < 1e-12
        if np.any(np.abs(w[at_well]) > 1e-12):
            raise RejectedInputError("W must vanish at the wells")
        keep = np.abs(1.0 - s * s) > 1e-6
        if np.any(w[keep] <= 0):
            raise RejectedInputError("W must be positive away from the wells")
        g = w[keep] / (1.0 - s[keep] ** 2) ** 2
        self._samples = arr
        self._g = CubicSpline(s[keep], g)
        fine = np.linspace(s[0], s[-1], 4001)
        if np.any(self._g(fine) <= 0):
            raise RejectedInputError("interpolated W is not positive away from the wells")
        for well in WELLS:
            if 8.0 * float(self._g(well)) < 1e-8:
                raise DegenerateWellError(f"W''({well:+.0f}) below 1e-8")

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return (1.0 - s * s) ** 2 * self._g(s)

    def d1(self, s):
        s = np.asarray(s, dtype=float)
        q = 1.0 - s * s
        return -4.0 * s * q * self._g(s) + q * q * self._g(s, 1)

    def d2(self, s):
        s = np.asarray(s, dtype=float)
        q = 1.0 - s * s
        return ((12.0 * s * s - 4.0) * self._g(s) - 8.0 * s * q * self._g(s, 1)
                + q * q * self._g(s, 2))

    def root2w(self, s):
        s = np.asarray(s, dtype=float)
        return (1.0 - s * s) * np.sqrt(2.0 * self._g(s))

    def root2w_prime(self, s):
        s = np.asarray(s, dtype=float)
        r = np.sqrt(2.0 * self._g(s))
        return -2.0 * s * r + (1.0 - s * s) * self._g(s, 1) / r

    def descriptor(self):
        return {"kind": "table", "samples": self._samples.tolist()}


def well_from_descriptor(desc: dict) -> DoubleWell:
    kind = desc.get("kind")
    if kind == "quartic":
        return QuarticWell(desc.get("scale", 1.0))
    if kind == "table":
        return TabulatedWell(desc["samples"])
    raise RejectedInputError(f"unknown potential kind {kind!r}")


def eval_well(w: DoubleWell, s):
    """Return (W, W', W'') at s."""
    s = _finite(s)
    return w.value(s), w.d1(s), w.d2(s)


def well_limit_check(w: DoubleWell, ks=range(3, 9)):
    """Check that W'/sqrt(W) has finite limits at both wells.

    Samples s = +-1 -+ 10^-k and requires the successive differences to shrink
    (Cauchy behaviour). Returns the two limit estimates.
    """
    limits = []
    for well in WELLS:
        s = np.array([well - np.sign(well) * 10.0 ** -k for k in ks])
        vals = w.d1(s) / np.sqrt(w.value(s))
        diffs = np.abs(np.diff(vals))
        if not np.all(np.isfinite(vals)) or np.any(diffs[1:] > diffs[:-1] + 1e-12):
            raise DegenerateWellError(f"W'/sqrt(W) has no finite limit at {well:+.0f}")
        limits.append(float(vals[-1]))
    return tuple(limits)


@dataclass(frozen=True)
class WellConstants:
    c0: float
    c_star: float
    gamma_plus: float
    gamma_minus: float
    c0_error: float = 0.0
    # Target of the mass constraint, c0|M| = |M+| - |M-|; set per configuration.
    mass_constant: float | None = None

    def with_mass(self, area_plus: float, area_minus: float) -> "WellConstants":
        return replace(self, mass_constant=float(area_plus - area_minus))


def derive_constants(w: DoubleWell, quad_tol: float = 1e-10) -> WellConstants:
    if not quad_tol > 0:
        raise DomainError("quad_tol must be positive")
    c0, err = quad(w.root2w, -1.0, 1.0, epsabs=0.0, epsrel=quad_tol, limit=200)
    if not np.isfinite(c0) or err > max(quad_tol * abs(c0), 1e-14):
        raise QuadratureError("c0 quadrature did not converge", estimate=err)
    # Independent route: composite Gauss on 64 panels.
    edges = np.linspace(-1.0, 1.0, 65)
    c_star = float(np.sum(_gauss_integral(w.root2w, edges[:-1], edges[1:])))
    gp, gm = w.gamma
    if not (gp > 0 and gm > 0):
        raise DegenerateWellError("indicial roots must be positive")
    return WellConstants(float(c0), c_star, gp, gm, float(err))


class WettingDensity:
    """sigma with sigma' = cos(theta) sqrt(2W), gauge sigma(-1) = 0.

    sigma is tabulated on [-1.2, 1.2] by panel quadrature and evaluated as the
    nearest lower node value plus a Gauss integral over the remainder.
    """

    delta = 0.2

    def __init__(self, well: DoubleWell, theta: float, n_panels: int = 240):
        self.well = well
        self.theta = float(theta)
        # cos(pi/2) is 6e-17 in floating point; make the free-boundary case exact.
        self.cos_theta = 0.0 if self.theta == math.pi / 2 else math.cos(self.theta)
        lo, hi = -1.0 - self.delta, 1.0 + self.delta
        self.nodes = np.linspace(lo, hi, n_panels + 1)
        panels = _gauss_integral(well.root2w, self.nodes[:-1], self.nodes[1:])
        cum = np.concatenate([[0.0], np.cumsum(panels)])
        at_minus = cum[0] + _gauss_integral(well.root2w, self.nodes[0], -1.0)
        self._prim = cum - at_minus
        self.table = self.cos_theta * self._prim

    def _primitive(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.nodes, s, side="right") - 1, 0, len(self.nodes) - 2)
        return self._prim[k] + _gauss_integral(self.well.root2w, self.nodes[k], s)

    def sigma(self, s):
        s = _finite(s)
        if self.cos_theta == 0.0:
            return np.zeros_like(s)
        return self.cos_theta * self._primitive(s)

    def sigma1(self, s):
        return self.cos_theta * self.well.root2w(_finite(s))

    def sigma2(self, s):
        return self.cos_theta * self.well.root2w_prime(_finite(s))

    @property
    def sigma2_at_wells(self):
        """(sigma''(-1), sigma''(+1))."""
        return float(self.sigma2(-1.0)), float(self.sigma2(1.0))


def build_wetting(w: DoubleWell, theta: float, quad_tol: float = 1e-10) -> WettingDensity:
    if not (np.isfinite(theta) and 0.0 < theta <= math.pi / 2):
        raise DomainError(f"theta={theta!r} outside the admissible range (0, pi/2]")
    wet = WettingDensity(w, theta)
    c0, err = quad(w.root2w, -1.0, 1.0, epsabs=0.0, epsrel=quad_tol, limit=200)
    if abs(wet._primitive(1.0) - c0) > max(10 * quad_tol * c0, 1e-13):
        raise QuadratureError("wetting table disagrees with c0 quadrature",
                              estimate=abs(wet._primitive(1.0) - c0))
    return wet
