"""Experiment runner: JSON config in, CSV series + JSON reports out.

Scenarios
---------
evolve              linear or nonlinear time marching, decay series + fit
ness                two-temperature steady state via the Picard map
ness-scaling        sweep of the fluctuation size with a power-law fit
hypo-audit          norm equivalence + dissipation Rayleigh table
conservation-audit  collision/boundary conservation residuals vs thresholds

Identical config + seed produce identical outputs for a fixed thread count;
set DVBOLT_THREADS to pin the compiled-kernel thread pool.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import WallModel
from .collision import (AngularRule, apply_C, apply_Q, build_linearized, moments)
from .geometry import Slab
from .hypocoercivity import AuditGeometry, check_equivalence, dissipation_audit, select_eta
from .sampling import structured_samples
from .steady import solve_ness, verify_ness_scaling
from .transport import SolverConfig, fit_decay_rate, solve_linear_evolution, \
    solve_nonlinear_evolution
from .velocity import admissible_zeta_window, build_grid, write_snapshot

SCENARIOS = ("evolve", "ness", "ness-scaling", "hypo-audit", "conservation-audit")

_DEFAULTS = {
    "geometry": {"type": "slab", "L": 0.5},
    "wall": {"epsilon": 1.0, "q_exp": 12, "theta0": 0.0,
             "theta_profile": {"left": 0.0, "right": 0.0}, "iota": {"type": "bases"}},
    "grid": {"n_per_axis": 12, "v_max": 6.0, "zeta": 0.3, "angular": [8, 16]},
    "solver": {"dt": 0.02, "T": 2.0, "n_cells": 32, "tol": 1e-6,
               "picard_tol": 1e-10, "snapshot_every": 0, "q_energy_cutoff": None},
    "seed": 0,
    "output": {"dir": "out"},
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def load_config(path) -> dict:
    raw = json.loads(Path(path).read_text())
    if "scenario" not in raw:
        raise KeyError("config is missing required key 'scenario'")
    return _merge(_DEFAULTS, raw)


def validate(path) -> list[str]:
    """Static config diagnostics; no computation is launched."""
    diags = []
    try:
        cfg = load_config(path)
    except Exception as exc:  # unreadable or unparsable
        return [f"config unreadable: {exc}"]
    if cfg["scenario"] not in SCENARIOS:
        diags.append(f"scenario: unknown scenario {cfg['scenario']!r}; options {SCENARIOS}")
    g = cfg["geometry"]
    if g["type"] not in ("slab", "cylinder"):
        diags.append(f"geometry.type: unsupported {g['type']!r}")
    if g.get("L", 0) <= 0:
        diags.append("geometry.L: must be positive")
    w = cfg["wall"]
    if not 0 <= w["theta0"] <= 0.125:
        diags.append(f"wall.theta0: {w['theta0']} exceeds 1/8 (must lie in [0, 1/8])")
    if not 0 < w["epsilon"] <= 1:
        diags.append(f"wall.epsilon: {w['epsilon']} outside (0, 1]")
    for key, val in w["theta_profile"].items() if isinstance(w["theta_profile"], dict) else []:
        if isinstance(val, (int, float)) and abs(val) > w["theta0"] + 1e-15:
            diags.append(f"wall.theta_profile.{key}: |{val}| exceeds theta0={w['theta0']}")
    gr = cfg["grid"]
    if gr["n_per_axis"] < 2:
        diags.append("grid.n_per_axis: must be >= 2")
    lo, hi = admissible_zeta_window(w["theta0"])
    if not lo < gr["zeta"] < hi:
        diags.append(
            f"grid.zeta: {gr['zeta']} outside the admissible window "
            f"({lo:.6f}, {hi:.6f}) for theta0={w['theta0']}"
        )
    s = cfg["solver"]
    if s["dt"] <= 0:
        diags.append("solver.dt: must be positive")
    else:
        crossing = 2.0 * g.get("L", 0.5) * w["epsilon"] / gr["v_max"]
        if s["dt"] / w["epsilon"] ** 2 >= crossing:
            diags.append(
                f"solver.dt: {s['dt']} too large; fastest characteristic crosses the slab "
                f"in {crossing:.4g} (rescaled time), sub-stepping would be required"
            )
    return diags


def _build(cfg: dict):
    g = cfg["geometry"]
    if g["type"] != "slab":
        raise ValueError("run scenarios support slab geometry; cylinder is diagnostics-only")
    dom = Slab(L=float(g["L"]))
    w = cfg["wall"]
    prof = w["theta_profile"]
    theta_fluct = {"table": prof["table"]} if "table" in prof else \
        {"left": float(prof.get("left", 0.0)), "right": float(prof.get("right", 0.0))}
    wall = WallModel(epsilon=float(w["epsilon"]), q_exp=float(w["q_exp"]),
                     theta0=float(w["theta0"]), theta_fluct=theta_fluct,
                     iota=w["iota"], direct_theta=bool(w.get("direct_theta", False)))
    gr = cfg["grid"]
    grid = build_grid(int(gr["n_per_axis"]), float(gr["v_max"]))
    op = build_linearized(grid)
    s = cfg["solver"]
    scfg = SolverConfig(dt=float(s["dt"]), epsilon=float(w["epsilon"]),
                        frame=s.get("frame", "rescaled"), zeta=float(gr["zeta"]),
                        q_rule=tuple(gr["angular"]),
                        q_energy_cutoff=s.get("q_energy_cutoff"),
                        picard_tol=float(s["picard_tol"]))
    return dom, wall, grid, op, scfg


def _write_series(path: Path, series) -> None:
    rows = np.column_stack([series.times, series.norms_H, series.norms_Linf])
    np.savetxt(path, rows, delimiter=",", header="t,norm_H,norm_Linf",
               comments="", fmt="%.17g")


def run(path, outdir=None) -> dict:
    cfg = load_config(path)
    diags = validate(path)
    if diags:
        raise ValueError("invalid config: " + "; ".join(diags))
    outdir = Path(outdir or cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(int(cfg["seed"]))
    scenario = cfg["scenario"]
    dom, wall, grid, op, scfg = _build(cfg)
    s = cfg["solver"]
    report = {"scenario": scenario, "config": cfg, "version": __version__,
              "metrics": {}, "files": []}

    if scenario == "evolve":
        kind = s.get("kind", "linear")
        nc = int(s["n_cells"])
        hx = 2 * dom.L / nc
        xc = -dom.L + (np.arange(nc) + 0.5) * hx
        M = grid.maxwellian(1.0)
        mode = (grid.speed2 - 3.0) / np.sqrt(6.0) * M + 0.5 * grid.nodes[:, 0] * grid.nodes[:, 1] * M
        f0 = float(s.get("perturbation", 1e-2)) * np.outer(np.sin(np.pi * xc / dom.L), mode)
        if kind == "linear":
            fT, series = solve_linear_evolution(scfg, dom, wall, op, f0, None,
                                                T=float(s["T"]), n_cells=nc)
        else:
            ness = solve_ness(scfg, dom, wall, op, tol=float(s["tol"]), n_cells=nc)
            fT, series = solve_nonlinear_evolution(scfg, dom, wall, op, f0,
                                                   ness.F, T=float(s["T"]), n_cells=nc)
        rate, r2 = fit_decay_rate(series)
        report["metrics"] = {"fitted_rate": rate, "fit_r2": r2,
                             "final_norm_H": series.norms_H[-1]}
        _write_series(outdir / "series.csv", series)
        report["files"].append("series.csv")
        if int(s.get("snapshot_every", 0)):
            snapdir = outdir / "snapshots"
            snapdir.mkdir(exist_ok=True)
            write_snapshot(fT, snapdir / "final.csv", meta=_snapshot_meta(cfg))
            report["files"].append("snapshots/final.csv")

    elif scenario == "ness":
        rep = solve_ness(scfg, dom, wall, op, tol=float(s["tol"]), n_cells=int(s["n_cells"]))
        report["metrics"] = {
            "residual": rep.residual, "iterations": rep.iterations,
            "contraction_factors": rep.contraction_factors,
            "distance_to_maxwellian": rep.distance_to_maxwellian,
            "budget": rep.budget, "horizon": rep.horizon,
        }
        write_snapshot(rep.F, outdir / "ness.csv", meta=_snapshot_meta(cfg))
        report["files"].append("ness.csv")

    elif scenario == "ness-scaling":
        theta0_list = cfg.get("theta0_list", [0.01, 0.02, 0.04])
        res = verify_ness_scaling(scfg, dom, wall, op, theta0_list,
                                  tol=float(s["tol"]), n_cells=int(s["n_cells"]))
        report["metrics"] = {"table": res["table"], "exponent": res["exponent"]}

    elif scenario == "hypo-audit":
        aud = cfg.get("audit", {})
        geom = AuditGeometry(L=dom.L, R=float(aud.get("R", dom.L)),
                             nx=int(aud.get("nx", 12)), ny=int(aud.get("ny", 6)))
        xs = geom.axial_centers()
        coords = np.repeat(xs, geom.ny)
        samples = structured_samples(op, coords, dom.L, int(aud.get("n_samples", 30)), rng)
        form = select_eta(geom, op, wall, samples[:8], eta0=float(aud.get("eta0", 0.01)))
        c_lo, c_hi = check_equivalence(form, samples)
        rayleigh = []
        for g in samples:
            rep = dissipation_audit(form, g)
            rayleigh.append({"rayleigh": rep.rayleigh, "boundary_defect": rep.boundary_defect})
        r_vals = [r["rayleigh"] for r in rayleigh]
        report["metrics"] = {
            "eta": form.eta, "c_low": c_lo, "c_high": c_hi,
            "kappa_hat": min(r_vals), "rayleigh_table": rayleigh,
        }
        (outdir / "hypo_audit.json").write_text(json.dumps(report["metrics"], indent=2))
        report["files"].append("hypo_audit.json")

    elif scenario == "conservation-audit":
        rule = AngularRule.product(*scfg.q_rule)
        M = grid.maxwellian(1.0)
        worst_q = worst_c = 0.0
        phis = np.stack([np.ones(grid.size), grid.nodes[:, 0], grid.nodes[:, 1],
                         grid.nodes[:, 2], grid.speed2], axis=0)
        for _ in range(int(s.get("n_samples", 5))):
            gg = rng.standard_normal(grid.size) * M
            q = apply_Q(grid, gg, gg, rule=rule, energy_cutoff=scfg.q_energy_cutoff)
            worst_q = max(worst_q, np.abs(phis @ (grid.weights * q)).max())
            c = apply_C(op, gg)
            worst_c = max(worst_c, np.abs(phis @ (grid.weights * c)).max())
        thr = 1e-12
        report["metrics"] = {"max_Q_invariant_residual": worst_q,
                             "max_C_invariant_residual": worst_c,
                             "threshold": thr,
                             "pass": bool(worst_q <= thr and worst_c <= thr)}
        if not report["metrics"]["pass"]:
            (outdir / "report.json").write_text(json.dumps(report, indent=2, default=str))
            raise RuntimeError("conservation-audit failed its thresholds")

    (outdir / "report.json").write_text(json.dumps(report, indent=2, default=str))
    report["files"].append("report.json")
    return report


def _snapshot_meta(cfg: dict) -> dict:
    return {
        "geometry": cfg["geometry"], "epsilon": cfg["wall"]["epsilon"],
        "q_exp": cfg["wall"]["q_exp"], "theta0": cfg["wall"]["theta0"],
        "zeta": cfg["grid"]["zeta"], "seed": cfg["seed"],
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dvbolt", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--outdir", default=None)
    p_val = sub.add_parser("validate", help="static config checks only")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    threads = os.environ.get("DVBOLT_THREADS")
    if threads:
        import numba
        numba.set_num_threads(int(threads))

    if args.command == "validate":
        diags = validate(args.config)
        for d in diags:
            print(d)
        return 1 if diags else 0
    try:
        report = run(args.config, outdir=args.outdir)
    except (ValueError, KeyError, RuntimeError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps({k: report[k] for k in ("scenario", "metrics", "files")},
                     indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
