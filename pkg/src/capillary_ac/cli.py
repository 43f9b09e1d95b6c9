"""Command-line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

SUBCOMMANDS = ("profile1d", "find-curve", "check-nondegeneracy", "build-approx", "solve",
               "sweep-epsilon", "report")
SWEEP_COLUMNS = ("epsilon", "lambda", "energy", "hausdorff", "angle_left", "angle_right", "iters")

EXIT_CONFIG = 2
EXIT_MODULE = 3

log = logging.getLogger("capillary_ac")


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


class Writer:
    """Collects artifacts of one run and writes the manifest last."""

    def __init__(self, out: Path, subcommand: str, cfg_hash: str):
        self.out = out
        self.subcommand = subcommand
        self.cfg_hash = cfg_hash
        self.artifacts = {}
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def _record(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.artifacts[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def json(self, name, obj):
        return self._record(name, dumps(obj))

    def csv(self, name, header, rows):
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if (isinstance(v, float) and not math.isfinite(v)) else
                        (repr(float(v)) if isinstance(v, float) else v) for v in r])
        return self._record(name, buf.getvalue())

    def manifest(self):
        import numpy
        import scipy

        from . import __version__

        m = {"subcommand": self.subcommand, "config_sha256": self.cfg_hash,
             "versions": {"package": __version__, "python": platform.python_version(),
                          "numpy": numpy.__version__, "scipy": scipy.__version__},
             "wall_time_s": time.perf_counter() - self.t0,
             "artifacts": dict(sorted(self.artifacts.items()))}
        (self.out / f"manifest_{self.subcommand.replace('-', '_')}.json").write_text(dumps(m))
        return m


def _slope(xs, ys):
    import numpy as np

    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = np.isfinite(ys) & (ys > 0)
    if ok.sum() < 3:
        return None
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


# subcommands ------------------------------------------------------------------

def cmd_profile1d(cfg, wr, args):
    import numpy as np

    from .potential import build_wetting, derive_constants, well_from_descriptor
    from .profile1d import solve_profile, spectrum_L0

    pot = well_from_descriptor(cfg.potential)
    consts = derive_constants(pot)
    prof = solve_profile(pot)
    l0 = spectrum_L0(pot, profile=prof)
    t = np.linspace(-10.0, 10.0, 401)
    wr.csv("profile1d.csv", ("t", "u1", "du1", "residual_first_integral"),
           zip(t, prof.u1(t), prof.du1(t), prof.first_integral_residual(t)))
    angles = {}
    for th in (math.pi / 6, math.pi / 4, math.pi / 3, math.pi / 2):
        wet = build_wetting(pot, th)
        c = (wet.sigma(1.0) - wet.sigma(-1.0)) / consts.c0
        angles[f"{th:.12f}"] = abs(math.acos(max(-1.0, min(1.0, float(c)))) - th)
    summary = {"c": prof.c, "c0": consts.c0, "c_star": consts.c_star,
               "gamma_plus": consts.gamma_plus, "gamma_minus": consts.gamma_minus,
               "first_integral_residual": float(np.max(np.abs(prof.first_integral_residual()))),
               "lambda0": l0.lambda0, "mu1": l0.mu1, "ground_mode_cosine": l0.cosine,
               "contact_angle_identity_error": angles}
    if hasattr(pot, "profile_closed_form"):
        tt = np.linspace(-10.0, 10.0, 2001)
        summary["closed_form_sup_error"] = float(np.max(np.abs(prof.u1(tt) - pot.profile_closed_form(tt))))
    wr.json("profile1d.json", summary)
    return summary


def cmd_find_curve(cfg, wr, args):
    import numpy as np

    setup = cfg.build(chart=False)
    curve = setup.curve
    s = np.linspace(0.0, curve.length, 201)
    pts, nu = curve.gamma(s), curve.nu(s)
    wr.csv("curve.csv", ("s", "x", "y", "nu_x", "nu_y"),
           zip(s, pts[:, 0], pts[:, 1], nu[:, 0], nu[:, 1]))
    summary = dict(curve.summary())
    summary.update({"kind": curve.kind, "theta": curve.theta,
                    "endpoints": [curve.endpoint(0).tolist(), curve.endpoint(1).tolist()],
                    "mass_target": curve.area_plus - curve.area_minus})
    wr.json("curve.json", summary)
    return summary


def cmd_check_nondegeneracy(cfg, wr, args):
    from .stability import assemble_jacobi, check_nondegeneracy

    setup = cfg.build(chart=False)
    jp = assemble_jacobi(setup.curve, setup.domain, n_nodes=cfg.jacobi_nodes)
    rep = check_nondegeneracy(jp)
    summary = rep.summary()
    summary.update({"ladder": {str(k): v for k, v in rep.ladder.items()},
                    "kernel_dim": rep.kernel_dim, "robin_coeff": list(jp.robin_coeff),
                    "length": jp.length})
    if rep.kernel is not None:
        wr.csv("kernel.csv", ("s", "omega"), zip(rep.s, rep.kernel))
    wr.json("nondegeneracy.json", summary)
    return summary


def cmd_build_approx(cfg, wr, args):
    from .approx import build_approx, build_cutoffs, residuals
    from .mesh import make_mesh

    setup = cfg.build()
    rows = []
    for eps in cfg.epsilons:
        mesh = make_mesh(setup.domain, min(cfg.h, eps * cfg.h_over_eps))
        cf = build_cutoffs(eps, cfg.delta_star, cfg.tau0)
        apx = build_approx(setup.profile, setup.chart, cf, mesh, coords=cfg.coords,
                           c_star=setup.consts.c_star)
        rep = residuals(apx, setup.pot, setup.wet, 0.0)
        if eps == cfg.epsilons[0]:
            wr.csv("approx_field.csv", ("x", "y", "u"),
                   zip(mesh.nodes[:, 0], mesh.nodes[:, 1], apx.field.values))
        rows.append({"epsilon": eps, "n_nodes": mesh.n_nodes, **rep.summary()})
    cols = ("epsilon", "n_nodes", "sup_interior", "sup_glue", "sup_boundary", "pi_boundary",
            "mass_defect")
    wr.csv("approx.csv", cols, ([r[c] for c in cols] for r in rows))
    eps = [r["epsilon"] for r in rows]
    summary = {"records": rows,
               "interior_slope": _slope(eps, [r["sup_interior"] for r in rows]),
               "pi_boundary_slope": _slope(eps, [r["pi_boundary"] for r in rows]),
               "mass_defect_slope": _slope(eps, [abs(r["mass_defect"]) for r in rows])}
    wr.json("approx.json", summary)
    return summary


def _state_record(st, setup):
    from .diagnostics import contact_angle, energy, hausdorff_to_curve, nodal_set

    poly = nodal_set(st.u)
    ang = contact_angle(poly, setup.domain, setup.curve)
    return {"epsilon": st.epsilon, "lambda": st.lam, "epsilon_lambda": st.epsilon * st.lam,
            "energy": energy(st.u, st.epsilon, setup.pot, setup.wet),
            "hausdorff": hausdorff_to_curve(poly, setup.curve),
            "angle_left": ang.get(0, math.nan), "angle_right": ang.get(1, math.nan),
            "iters": st.newton_iters, "residual": st.residual_norm, "mass_error": st.mass_error,
            "history": st.history, "smallest_eigenvalue": st.smallest_eigenvalue,
            "near_singular": st.near_singular, "n_nodes": st.u.mesh.n_nodes}


def cmd_solve(cfg, wr, args):
    from .approx import build_approx, build_cutoffs
    from .solver import newton_solve, sweep_mesh

    setup = cfg.build()
    eps = cfg.epsilons[0]
    mesh = sweep_mesh(cfg, setup.curve, eps)
    apx = build_approx(setup.profile, setup.chart, build_cutoffs(eps, cfg.delta_star, cfg.tau0),
                       mesh, coords=cfg.coords, c_star=setup.consts.c_star)
    st = newton_solve(apx, mesh, setup.pot, setup.wet, eps,
                      setup.curve.area_plus - setup.curve.area_minus, tol=cfg.tol,
                      max_iter=cfg.max_iter)
    rec = _state_record(st, setup)
    wr.csv("solution.csv", ("x", "y", "u"),
           zip(mesh.nodes[:, 0], mesh.nodes[:, 1], st.u.values))
    wr.json("solve.json", rec)
    return rec


def cmd_sweep(cfg, wr, args):
    from .solver import continuation_sweep

    setup = cfg.build()
    out = continuation_sweep(cfg, setup)
    recs = []
    for st, rec in out:
        r = dict(rec)
        r["epsilon_lambda"] = st.epsilon * st.lam
        r["history"] = st.history
        r["near_singular"] = st.near_singular
        recs.append(r)
    wr.csv("sweep.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in recs))
    summary = {"records": recs, "curve": setup.curve.summary(), "c_star": setup.consts.c_star}
    if len(recs) >= 4:
        from .diagnostics import fit_expansions

        summary["fit"] = fit_expansions(recs, setup.curve, setup.consts).summary()
    wr.json("sweep.json", summary)
    return summary


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(SWEEP_COLUMNS) - set(rows[0]):
        raise ValueError(f"{path} is not a sweep table with columns {SWEEP_COLUMNS}")
    out = []
    for r in rows:
        out.append({k: (int(r[k]) if k == "iters" else float(r[k]) if r[k] != "" else math.nan)
                    for k in SWEEP_COLUMNS})
    return out


def cmd_report(cfg, wr, args):
    from .diagnostics import fit_expansions

    src = Path(args.input) if args.input else wr.out / "sweep.csv"
    recs = read_sweep_csv(src)
    setup = cfg.build(chart=False)
    fit = fit_expansions(recs, setup.curve, setup.consts)
    s = fit.summary()
    summary = {k: s[k] for k in ("lambda0", "lambda_ratio", "energy_model", "energy_coeff",
                                 "angle_slope", "hausdorff_slope")}
    summary.update({"energy_expected": s["energy_expected"],
                    "energy_power": s["energy_power"], "energy_power_fit": s["energy_power_fit"],
                    "energy_residual_ratio": s["energy_residual_ratio"],
                    "lambda_expected": s["lambda_expected"], "dropped_epsilons": s["dropped_epsilons"],
                    "kappa": setup.curve.kappa, "c_star": setup.consts.c_star})
    cols = ("epsilon", "lambda", "energy", "angle_error", "hausdorff")
    wr.csv("report_table.csv", cols,
           zip(fit.epsilon, fit.samples["lambda"], fit.samples["energy"],
               fit.samples["angle_error"], fit.samples["hausdorff"]))
    wr.json("report.json", summary)
    return summary


HANDLERS = {"profile1d": cmd_profile1d, "find-curve": cmd_find_curve,
            "check-nondegeneracy": cmd_check_nondegeneracy, "build-approx": cmd_build_approx,
            "solve": cmd_solve, "sweep-epsilon": cmd_sweep, "report": cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog="capillary-ac",
                                description="Mass-constrained Allen-Cahn with contact angle.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON run configuration (defaults are used if omitted)")
    p.add_argument("--out", default=None, help="output directory (default: config output_dir or ./out)")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads")
    p.add_argument("--log-level", default="WARNING",
                   choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    p.add_argument("--input", default=None, help="sweep CSV for the report subcommand")
    return p


def _fail(out, code, payload):
    text = dumps(payload)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text)
        except OSError:
            pass
    sys.stdout.write(text)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail(None, EXIT_CONFIG, {"status": "config error", "message": "--threads must be >= 1"})
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")

    from .config import RunConfig
    from .errors import ConfigurationError

    out = Path(args.out) if args.out else None
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig().validate()
    except ConfigurationError as exc:
        return _fail(out, EXIT_CONFIG, {"status": "config error", "message": str(exc)})
    if out is None:
        out = Path(cfg.output_dir or "out")
    wr = Writer(out, args.subcommand, cfg.sha256())
    try:
        HANDLERS[args.subcommand](cfg, wr, args)
    except ConfigurationError as exc:
        return _fail(out, EXIT_CONFIG, {"status": "config error", "message": str(exc)})
    except (ValueError, ArithmeticError, RuntimeError, MemoryError, OSError) as exc:
        return _fail(out, EXIT_MODULE, {"status": "module error", "subcommand": args.subcommand,
                                        "type": type(exc).__name__, "message": str(exc),
                                        "epsilon": getattr(exc, "epsilon", None)})
    wr.manifest()
    return 0


if __name__ == "__main__":
    sys.exit(main())
