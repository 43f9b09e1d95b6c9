"""Run configuration: parsing, validation and construction of the shared objects."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigurationError

DEFAULT_EPSILONS = [0.2, 0.14, 0.1, 0.07, 0.05]


@dataclass
class Setup:
    pot: object
    wet: object
    consts: object
    profile: object
    domain: object
    curve: object
    chart: object


@dataclass
class RunConfig:
    domain: dict = field(default_factory=lambda: {"kind": "rectangle", "width": 1.0, "height": 1.0})
    theta: float = math.pi / 2
    potential: dict = field(default_factory=lambda: {"kind": "quartic"})
    curve_selector: dict = field(default_factory=lambda: {"kind": "segment", "offset": 0.5})
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    h: float = 0.05
    h_over_eps: float = 0.125
    band_refine: bool = True
    delta_star: float = 0.5
    tau0: float = 0.46
    eps0: float = 0.02
    tol: float = 1e-10
    max_iter: int = 30
    coords: str = "fermi"
    warm_start: str = "approx"
    jacobi_nodes: int = 256
    seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self):
        def num(name, v):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigurationError(f"{name} must be a finite number")
            return float(v)

        theta = num("theta", self.theta)
        if not 0.0 < theta <= math.pi / 2:
            raise ConfigurationError(f"theta = {theta} outside the admissible range (0, pi/2]")
        if not isinstance(self.domain, dict) or self.domain.get("kind") not in (
                "rectangle", "strip_rectangle", "unit_disk"):
            raise ConfigurationError("domain.kind must be rectangle, strip_rectangle or unit_disk")
        if not isinstance(self.potential, dict) or self.potential.get("kind") not in ("quartic", "table"):
            raise ConfigurationError("potential.kind must be quartic or table")
        if not isinstance(self.curve_selector, dict) or "kind" not in self.curve_selector:
            raise ConfigurationError("curve_selector.kind is required")
        eps = self.epsilons
        if not isinstance(eps, list) or not eps:
            raise ConfigurationError("epsilons must be a non-empty list")
        eps = [num("epsilon", e) for e in eps]
        if any(not 0.0 < e <= 0.25 for e in eps):
            raise ConfigurationError("every epsilon must lie in (0, 0.25]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigurationError("the epsilon schedule must be strictly decreasing")
        self.epsilons = eps
        h = num("h", self.h)
        if not 0.0 < h <= 0.5:
            raise ConfigurationError("h must lie in (0, 0.5]")
        if not 0.0 < num("h_over_eps", self.h_over_eps) <= 1.0:
            raise ConfigurationError("h_over_eps must lie in (0, 1]")
        ds = num("delta_star", self.delta_star)
        if not 0.0 < ds < 1.0:
            raise ConfigurationError("delta_star must lie in (0, 1)")
        tau0, eps0 = num("tau0", self.tau0), num("eps0", self.eps0)
        if tau0 <= 0 or eps0 <= 0:
            raise ConfigurationError("tau0 and eps0 must be positive")
        if max(eps) ** ds > tau0:
            raise ConfigurationError(f"band eps^delta* = {max(eps) ** ds:.4g} does not fit the chart "
                                     f"width tau0 = {tau0}")
        if not 0.0 < num("tol", self.tol) < 1e-2:
            raise ConfigurationError("tol must lie in (0, 1e-2)")
        if not isinstance(self.max_iter, int) or self.max_iter < 1:
            raise ConfigurationError("max_iter must be a positive integer")
        if self.coords not in ("fermi", "twisted"):
            raise ConfigurationError("coords must be fermi or twisted")
        if self.warm_start not in ("approx", "resample"):
            raise ConfigurationError("warm_start must be approx or resample")
        if not isinstance(self.jacobi_nodes, int) or self.jacobi_nodes < 32:
            raise ConfigurationError("jacobi_nodes must be an integer >= 32")
        if not isinstance(self.seed, int):
            raise ConfigurationError("seed must be an integer")
        return self

    def build(self, chart: bool = True) -> Setup:
        """Potential, wetting density, constants, profile, domain, curve and chart."""
        from .geometry import PlanarDomain, build_fermi_chart, find_capillary_curve
        from .potential import build_wetting, derive_constants, well_from_descriptor
        from .profile1d import solve_profile

        pot = well_from_descriptor(self.potential)
        wet = build_wetting(pot, self.theta)
        dom = PlanarDomain.from_descriptor(self.domain)
        curve = find_capillary_curve(dom, self.theta, self.curve_selector)
        consts = derive_constants(pot).with_mass(curve.area_plus, curve.area_minus)
        prof = solve_profile(pot)
        ch = build_fermi_chart(curve, dom, self.tau0, self.eps0) if chart else None
        return Setup(pot, wet, consts, prof, dom, curve, ch)
