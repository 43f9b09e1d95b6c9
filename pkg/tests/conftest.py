import json
import math
from pathlib import Path

import pytest

from capillary_ac.config import RunConfig
from capillary_ac.potential import QuarticWell, build_wetting, derive_constants
from capillary_ac.profile1d import solve_profile

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def load_config(name, **overrides):
    data = json.loads((CONFIGS / f"{name}.json").read_text())
    data.update(overrides)
    return RunConfig.from_dict(data)


@pytest.fixture(scope="session")
def quartic():
    return QuarticWell()


@pytest.fixture(scope="session")
def profile(quartic):
    return solve_profile(quartic)


@pytest.fixture(scope="session")
def consts(quartic):
    return derive_constants(quartic)


@pytest.fixture(scope="session")
def wet_free(quartic):
    return build_wetting(quartic, math.pi / 2)


@pytest.fixture(scope="session")
def square_setup():
    return load_config("square_segment").build()


@pytest.fixture(scope="session")
def strip_setup():
    return load_config("strip_arc").build()


@pytest.fixture(scope="session")
def square_sweep(square_setup):
    from capillary_ac.solver import continuation_sweep

    return continuation_sweep(load_config("square_segment"), square_setup)


@pytest.fixture(scope="session")
def strip_sweep(strip_setup):
    from capillary_ac.solver import continuation_sweep

    return continuation_sweep(load_config("strip_arc"), strip_setup)


def approx_at(cfg, setup, eps, **kw):
    """Glued approximation on the sweep mesh of a configuration."""
    from capillary_ac.approx import build_approx, build_cutoffs
    from capillary_ac.solver import sweep_mesh

    mesh = sweep_mesh(cfg, setup.curve, eps)
    cf = build_cutoffs(eps, cfg.delta_star, cfg.tau0)
    return build_approx(setup.profile, setup.chart, cf, mesh, c_star=setup.consts.c_star, **kw)


@pytest.fixture(scope="session")
def strip_residuals(strip_setup):
    from capillary_ac.approx import residuals

    cfg = load_config("strip_arc")
    out = {}
    for eps in cfg.epsilons:
        apx = approx_at(cfg, strip_setup, eps)
        out[eps] = residuals(apx, strip_setup.pot, strip_setup.wet, 0.0)
    return out
