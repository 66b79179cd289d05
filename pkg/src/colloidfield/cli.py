"""Command line entry point.

    colloidfield SUBCOMMAND --config PATH [--output DIR] [--strict] [--workers N]

Exit codes: 0 success, 1 configuration error, 2 non-convergence under
``--strict``, 3 failed verification.
"""
from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from importlib import metadata

import numpy as np

from ._errors import ConfigurationError
from .anchoring import boundary_data, dirichlet_anchoring, weak_anchoring
from .config import EXPERIMENTS, load_config, parse_config
from .expansion import (
    evaluate_expansion,
    extract_expansion,
    image_degree,
    remainder_slope,
    shell_radii,
    shell_samples,
)
from .exterior_grid import build_grid, sphere, spheroid
from .fields import DirectorField
from .io import read_expansion, read_field, write_csv, write_field, write_json
from .minimizer import SolveConfig, solve_director
from .poisson_decay import (
    PoissonMode,
    closed_form_amplitude,
    decay_exponents,
    log_grid,
    radial_operator,
    solve_mode,
    verify_decay,
)
from .sphgrid import sh_analyze
from .torque import (
    corollary_report,
    fibonacci,
    great_circle,
    local_star,
    sweep_energy_landscape,
    torque_identity_check,
)

__all__ = ["main", "run", "EXIT_OK", "EXIT_CONFIG", "EXIT_NONCONVERGED", "EXIT_VERIFY"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3

_UNIT_DRIFT = 1e-12


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("colloidfield", "numpy", "scipy", "scikit-learn", "pyamg"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


# --- builders ---------------------------------------------------------------


def build_problem(cfg):
    """Grid and surface energy described by a :class:`RunConfig`."""
    p, g, a = cfg["particle"], cfg["grid"], cfg["anchoring"]
    shape = sphere(p["radius"]) if p["kind"] == "sphere" else spheroid(p["a"], p["b"], p["axis"])
    grid = build_grid(shape, g["n_s"], (g["n_theta"], g["n_phi"]), g["R_out"])
    n_D = boundary_data(
        a["pattern"], shape, grid.angular, m=a["m"], alpha=a["alpha"], axis=a["tilt_axis"]
    )
    F = dirichlet_anchoring(grid, n_D) if a["kind"] == "dirichlet" else weak_anchoring(grid, a["W"], n_D)
    return grid, F


def solve_config(cfg):
    s = cfg["solve"]
    return SolveConfig(
        outer_bc=s["outer_bc"],
        max_iters=s["max_iters"],
        grad_tol=s["grad_tol"],
        step0=s["step0"],
        method=s["method"],
        seed=s["seed"],
    )


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def _window(cfg, grid):
    w = cfg["expansion"]["fit_window"]
    return (2.0 * grid.rho_max, grid.R_out / 2.0) if w is None else tuple(w)


# --- experiments ------------------------------------------------------------


class _Outcome:
    def __init__(self):
        self.files = []
        self.checks = {}
        self.converged = True

    def check(self, name, ok):
        self.checks[name] = bool(ok)


def _solve_report(field, rep):
    trace = np.asarray(rep.energy_trace)
    drift = float(np.max(np.abs(np.linalg.norm(field.values, axis=1) - 1.0)))
    return {
        "energy": rep.energy,
        "iterations": rep.iterations,
        "grad_norm": rep.grad_norm,
        "converged": rep.converged,
        "stagnated": rep.stagnated,
        "unit_drift": drift,
        "monotone": bool(np.all(np.diff(trace) <= 0.0)),
    }


def _exp_solve(cfg, out, res, workers):
    grid, F = build_problem(cfg)
    n0 = _unit(cfg["solve"]["n0"])
    field, rep = solve_director(grid.shape, F, n0, grid, solve_config(cfg))
    h = cfg.hash()
    write_field(os.path.join(out, "field"), field, h)
    info = _solve_report(field, rep)
    res.converged = rep.converged
    res.check("unit_norm", info["unit_drift"] <= _UNIT_DRIFT)
    res.check("monotone_energy", info["monotone"])
    write_json(os.path.join(out, "solve_report.json"), {"config_hash": h, "solve": info, "checks": res.checks})
    res.files += ["field.bin", "field.json", "field.csv", "solve_report.json"]
    return field


def _load_or_solve(cfg, out, res, workers):
    src = cfg["expansion"]["input"]
    if src is None:
        return _exp_solve(cfg, out, res, workers)
    grid, _ = build_problem(cfg)
    values, meta = read_field(src)
    if meta["grid"] != grid.metadata():
        raise ConfigurationError(f"field dump '{src}' does not match the configured grid")
    return DirectorField(grid, values, _unit(meta["n0"]))


def _expansion_csv_rows(field, window):
    radii = shell_radii(field.grid, window)
    samples = shell_samples(field, radii) - field.far_value
    rows = []
    for rk, s in zip(radii, samples):
        a = sh_analyze(s, field.grid.angular, 2).a
        for l in range(3):
            for m in range(-l, l + 1):
                k = l * l + l + m
                rows.append([rk, l, m, *a[k]])
    return rows


def _exp_extract(cfg, out, res, workers):
    field = _load_or_solve(cfg, out, res, workers)
    e_cfg = cfg["expansion"]
    window = _window(cfg, field.grid)
    e = extract_expansion(
        field,
        window,
        truncation_terms=image_degree(cfg["solve"]["outer_bc"]) if e_cfg["truncation_terms"] else False,
        harmonic_only=e_cfg["harmonic_only"],
        corr_variant=e_cfg["corr_variant"],
    )
    h = cfg.hash()
    d = e.to_dict()
    d["config_hash"] = h
    write_json(os.path.join(out, "expansion.json"), d)
    write_csv(
        os.path.join(out, "expansion_shells.csv"),
        ["r", "l", "m", "cx", "cy", "cz"],
        _expansion_csv_rows(field, window),
        h,
    )
    slope, _, _ = remainder_slope(field, e, include_corr=not e_cfg["harmonic_only"])
    n0 = field.far_value
    v = e.v0
    orth_v = abs(v @ n0) <= 1e-3 * max(np.linalg.norm(v), 1e-6)
    orth_p = all(abs(pj @ n0) <= 1e-3 * max(np.linalg.norm(pj), 1e-6) for pj in e.p)
    res.check("v0_orthogonal", orth_v)
    res.check("p_orthogonal", orth_p)
    if slope is not None:
        res.check("remainder_slope", slope <= -3.5)
    write_json(
        os.path.join(out, "extract_report.json"),
        {
            "config_hash": h,
            "v0_dot_n0": float(v @ n0),
            "p_dot_n0": [float(pj @ n0) for pj in e.p],
            "remainder_slope": slope,
            "checks": res.checks,
        },
    )
    res.files += ["expansion.json", "expansion_shells.csv", "extract_report.json"]


def _exp_eval(cfg, out, res, workers):
    e_cfg = cfg["expansion"]
    if e_cfg["input"] is None or e_cfg["points"] is None:
        raise ConfigurationError("eval-expansion needs 'expansion.input' and 'expansion.points'")
    e = read_expansion(e_cfg["input"])
    pts = np.asarray(e_cfg["points"], float)
    vals = evaluate_expansion(e, pts, corr_variant=e_cfg["corr_variant"])
    write_csv(
        os.path.join(out, "evaluation.csv"),
        ["x", "y", "z", "nx", "ny", "nz"],
        np.hstack([pts, vals]),
        cfg.hash(),
    )
    res.files.append("evaluation.csv")


def _sampling(cfg):
    s = cfg["sweep"]
    if s["sampling"] == "fibonacci":
        return fibonacci(s["N"])
    if s["sampling"] == "great_circle":
        return great_circle(s["axis"], s["N"])
    return local_star(s["n0"], s["h"], s["richardson"])


def _exp_sweep(cfg, out, res, workers):
    grid, F = build_problem(cfg)
    land = sweep_energy_landscape(
        grid.shape, F, _sampling(cfg), grid, solve_config(cfg),
        fit_window=_window(cfg, grid), workers=workers,
    )
    h = cfg.hash()
    path = os.path.join(out, "landscape.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={h}\n")
        fh.write(land.to_csv())
    # symmetry corollaries need anchoring that is invariant as well
    shape = grid.shape
    iso = cfg["anchoring"]["pattern"] == "homeotropic"
    rep = corollary_report(
        land,
        axis=shape.axis if iso and shape.symmetry == "axis" else None,
        sphere=iso and shape.symmetry == "full",
    )
    res.converged = bool(land.converged.all())
    if "sphere_max_v0" in rep:
        res.check("sphere_v0", rep["sphere_max_v0"] <= 1e-3)
    if "axis_metric" in rep:
        res.check("axis_torque", rep["axis_metric"] <= 1e-2)
    res.check("semiconcavity", rep["semiconcavity"]["violations"] == 0)
    rep["config_hash"] = h
    rep["checks"] = res.checks
    write_json(os.path.join(out, "sweep_report.json"), rep)
    res.files += ["landscape.csv", "sweep_report.json"]


def _exp_torque(cfg, out, res, workers):
    grid, F = build_problem(cfg)
    t = cfg["torque"]
    rep = torque_identity_check(
        t["n0"], grid.shape, F, grid, solve_config(cfg), t["h"],
        richardson=t["richardson"], fit_window=_window(cfg, grid), workers=workers,
    )
    res.converged = rep.converged
    res.check("torque_identity", rep.rel_error <= t["threshold"])
    d = rep.to_dict()
    d.update(config_hash=cfg.hash(), threshold=t["threshold"], checks=res.checks)
    write_json(os.path.join(out, "torque.json"), d)
    res.files.append("torque.json")


def poisson_check(gamma, l, d=3, R_max=100.0, n_r=2001, tail_exponent=None, inner_exponent=None):
    """Manufactured mode ``f = r^(-gamma-2)`` against ``u = A r^-gamma``.

    ``inner_exponent=None`` continues the source inside the unit ball by the
    same power law (exact for this manufactured source).
    """
    r = log_grid(R_max, n_r)
    q = gamma + 2.0 if tail_exponent is None else tail_exponent
    p = gamma + 2.0 if inner_exponent is None else inner_exponent
    mode = PoissonMode(decay_exponents(l, d), gamma, r, r ** (-gamma - 2.0), q, p)
    u = solve_mode(mode)
    exact = closed_form_amplitude(l, gamma, d) * r ** (-gamma)
    rel = float(np.max(np.abs(u - exact) / np.abs(exact)))
    dec = verify_decay(u, r, gamma)
    lu = radial_operator(u, r, l, d)
    f = r[1:-1] ** (-gamma - 2.0)
    resid = float(np.sqrt(np.sum((lu - f) ** 2) / np.sum(f**2)))
    return {
        "gamma": gamma,
        "l": l,
        "d": d,
        "branch": mode.branch,
        "closed_form_rel_err": rel,
        "slope": dec.slope,
        "decay_passed": dec.passed,
        "residual_norm": resid,
    }


def _exp_poisson(cfg, out, res, workers):
    p = cfg["poisson"]
    rep = poisson_check(
        p["gamma"], p["l"], p["d"], p["R_max"], p["n_r"], p["tail_exponent"], p["inner_exponent"]
    )
    res.check("closed_form", rep["closed_form_rel_err"] <= p["tolerance"])
    res.check("decay", bool(rep["decay_passed"]))
    rep.update(config_hash=cfg.hash(), checks=res.checks)
    write_json(os.path.join(out, "poisson.json"), rep)
    res.files.append("poisson.json")


def _exp_report(cfg, out, res, workers):
    import json

    summary = {}
    for name in sorted(os.listdir(out)):
        if not name.endswith(".json") or name in ("manifest.json", "summary.json"):
            continue
        with open(os.path.join(out, name), encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except ValueError:
                continue
        if isinstance(d, dict) and "checks" in d:
            summary[name] = {"config_hash": d.get("config_hash"), "checks": d["checks"]}
            for k, v in d["checks"].items():
                res.check(f"{name}:{k}", v)
    write_json(os.path.join(out, "summary.json"), {"config_hash": cfg.hash(), "reports": summary})
    res.files.append("summary.json")


_DISPATCH = {
    "solve": _exp_solve,
    "extract": _exp_extract,
    "eval-expansion": _exp_eval,
    "sweep": _exp_sweep,
    "torque-check": _exp_torque,
    "poisson-check": _exp_poisson,
    "report": _exp_report,
}


def run(cfg, output_dir=None, strict=None, workers=None):
    """Run the configured experiment; returns an exit code."""
    out = output_dir or cfg.output_dir
    strict = cfg.strict if strict is None else strict
    workers = cfg["output"]["workers"] if workers is None else workers
    os.makedirs(out, exist_ok=True)
    res = _Outcome()
    t0 = time.perf_counter()
    try:
        _DISPATCH[cfg.experiment](cfg, out, res, workers)
    except (ConfigurationError, OSError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    elapsed = time.perf_counter() - t0
    write_json(
        os.path.join(out, "manifest.json"),
        {
            "config_hash": cfg.hash(),
            "experiment": cfg.experiment,
            "config": cfg.canonical(),
            "versions": _versions(),
            "timings": {"total_seconds": elapsed},
            "files": sorted(res.files),
            "checks": res.checks,
            "converged": res.converged,
        },
    )
    failed = [k for k, v in res.checks.items() if not v]
    if failed:
        logger.warning("verification failed: %s", ", ".join(failed))
    if strict and not res.converged:
        return EXIT_NONCONVERGED
    if failed:
        return EXIT_VERIFY
    return EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(prog="colloidfield", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=EXPERIMENTS)
    ap.add_argument("--config", required=False, help="configuration file")
    ap.add_argument("--output", help="output directory")
    ap.add_argument("--strict", action="store_true", help="exit 2 when a solve does not converge")
    ap.add_argument("--workers", type=int, default=None, help="parallel solves")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
        cfg.values["experiment"]["name"] = args.command
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("value out of range for 'output.workers'")
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.output, args.strict or None, args.workers)


if __name__ == "__main__":
    sys.exit(main())
