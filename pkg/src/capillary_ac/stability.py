"""Jacobi operator of a capillary curve and the volume-nondegeneracy test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh, null_space, svd

from .errors import RejectedInputError
from .geometry import CapillaryCurve, PlanarDomain

CONVENTIONS = ("standard", "literal")
LADDER = (64, 128, 256)


@dataclass
class JacobiProblem:
    """-w'' - V w (standard) or -w'' + V w (literal), Robin closure dw/dtau = q w.

    dw/dtau is the outward conormal derivative: -w'(0) at s = 0 and w'(L) at s = L.
    """

    length: float
    n_nodes: int
    potential_coeff: Callable
    robin_coeff: tuple
    convention_flag: str = "standard"

    def __post_init__(self):
        if self.n_nodes < 32:
            raise RejectedInputError("n_nodes must be at least 32")
        if self.convention_flag not in CONVENTIONS:
            raise RejectedInputError(f"convention_flag must be one of {CONVENTIONS}")

    def refined(self, n_nodes: int) -> "JacobiProblem":
        return JacobiProblem(self.length, n_nodes, self.potential_coeff, self.robin_coeff,
                             self.convention_flag)

    @property
    def s(self):
        return np.linspace(0.0, self.length, self.n_nodes)

    @property
    def weights(self):
        """Lumped (trapezoidal) quadrature weights."""
        h = self.length / (self.n_nodes - 1)
        w = np.full(self.n_nodes, h)
        w[[0, -1]] = 0.5 * h
        return w

    def stiffness(self):
        """Symmetric matrix A of the bilinear form a(w, v)."""
        n, h = self.n_nodes, self.length / (self.n_nodes - 1)
        A = np.zeros((n, n))
        i = np.arange(n - 1)
        A[i, i] += 1.0 / h
        A[i + 1, i + 1] += 1.0 / h
        A[i, i + 1] -= 1.0 / h
        A[i + 1, i] -= 1.0 / h
        sign = -1.0 if self.convention_flag == "standard" else 1.0
        A += np.diag(sign * self.weights * self.potential_coeff(self.s))
        A[0, 0] -= self.robin_coeff[0]
        A[-1, -1] -= self.robin_coeff[1]
        return A

    def operator(self):
        """Matrix of w -> L w (strong form, lumped mass)."""
        return self.stiffness() / self.weights[:, None]

    def bordered(self):
        """(w, c) -> (L w + c, int w) as an (n+1) x (n+1) matrix."""
        n = self.n_nodes
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = self.operator()
        B[:n, n] = 1.0
        B[n, :n] = self.weights
        return B

    def bordered_symmetric(self):
        """The bordered matrix after the symmetric scaling by sqrt(weights)."""
        n = self.n_nodes
        r = np.sqrt(self.weights)
        S = np.zeros((n + 1, n + 1))
        S[:n, :n] = self.stiffness() / np.outer(r, r)
        S[:n, n] = r
        S[n, :n] = r
        return S

    def weighted_inner(self, x, y):
        n = self.n_nodes
        return float(np.sum(self.weights * x[:n] * y[:n]) + x[n] * y[n])

    def constrained_spectrum(self):
        """Eigenvalues of a(w, w) / int w^2 restricted to int w = 0."""
        r = np.sqrt(self.weights)
        S0 = self.stiffness() / np.outer(r, r)
        Q = null_space(r[None, :])
        return eigh(Q.T @ S0 @ Q, eigvals_only=True)


def assemble_jacobi(curve: CapillaryCurve, dom: PlanarDomain, n_nodes: int = 128,
                    convention_flag: str = "standard",
                    potential_coeff: Callable | None = None) -> JacobiProblem:
    """Jacobi problem of a capillary curve in a flat planar domain.

    The Robin coefficient is (II_wall + cos(a) kappa) / sin(a), a the angle
    between nu and nu_wall, which is independent of the orientation of nu.
    """
    robin = []
    for end in (0, 1):
        cw = curve.cos_wall(end)
        sw = math.sqrt(max(0.0, 1.0 - cw * cw))
        if sw < 1e-8:
            raise RejectedInputError("contact angle too close to 0")
        wall_curv = float(dom.boundary_curvature(curve.endpoint(end)))
        robin.append((wall_curv + cw * curve.kappa) / sw)
    if potential_coeff is None:
        k2 = curve.kappa ** 2

        def potential_coeff(s):
            # |II|^2 + Ric(nu, nu); Ric vanishes in the flat plane.
            return np.full(np.shape(s), k2)
    return JacobiProblem(curve.length, n_nodes, potential_coeff, tuple(robin), convention_flag)


@dataclass
class NondegeneracyReport:
    smallest_singular_value: float
    ladder: dict
    kernel_dim: int
    eigen_spectrum: np.ndarray
    verdict: str
    kernel: np.ndarray | None = None
    kernel_c: float | None = None
    s: np.ndarray = field(default=None, repr=False)

    def summary(self):
        return {"verdict": self.verdict,
                "smallest_singular_value": float(self.smallest_singular_value),
                "spectrum_head": [float(v) for v in self.eigen_spectrum[:5]]}


def check_nondegeneracy(jp: JacobiProblem, ladder=LADDER, kernel_tol: float = 1e-6) -> NondegeneracyReport:
    """Smallest singular value of the bordered operator along a refinement ladder.

    Nondegenerate: the value changes by less than 10% over two successive
    refinements. Degenerate: it falls below kernel_tol or decays to zero under
    refinement. Otherwise inconclusive.
    """
    values = {}
    for n in ladder:
        S = jp.refined(n).bordered_symmetric()
        values[n] = float(svd(S, compute_uv=False)[-1])
    fine = jp.refined(ladder[-1])
    S = fine.bordered_symmetric()
    U, sv, Vt = svd(S)
    seq = [values[n] for n in ladder]
    changes = [abs(b - a) / max(a, 1e-300) for a, b in zip(seq, seq[1:])]
    if seq[-1] < kernel_tol or all(b < a / 3 for a, b in zip(seq, seq[1:])):
        verdict = "degenerate"
    elif all(c < 0.1 for c in changes[-2:]):
        verdict = "nondegenerate"
    else:
        verdict = "inconclusive(mesh)"
    kernel_dim = int(np.sum(sv < max(kernel_tol, 1e-10 * sv[0])))
    kernel = kernel_c = None
    if verdict == "degenerate":
        vec = Vt[-1]
        n = fine.n_nodes
        kernel = vec[:n] / np.sqrt(fine.weights)
        kernel_c = float(vec[n])
        scale = np.max(np.abs(kernel))
        kernel, kernel_c = kernel / scale, kernel_c / scale
    return NondegeneracyReport(seq[-1], values, kernel_dim, fine.constrained_spectrum(),
                               verdict, kernel, kernel_c, fine.s)
