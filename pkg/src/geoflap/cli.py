"""Command-line entry point.

Subcommands: simulate, find-orbit, compare-abdomen, sensitivity,
stabilize, validate.  Every run resolves its configuration, writes the
snapshot beside its outputs, and (unless plots are disabled in config)
renders matplotlib figures alongside the delimited files.

Exit codes: 0 success, 1 usage error, 2 validation/search failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

import numpy as np
import yaml

from . import plots
from .aero import AeroModel, load_coeff_table
from .config import RunConfig, orbit_params_from_config
from .morphology import (SchemaError, ValidationError, default_morphology,
                         load_morphology)
from .optimization import (MpcOptions, OrbitOptions, OrbitParameterVector,
                           OrbitSearchError, ReferenceOrbit, default_perturbation,
                           default_seed, compare_abdomen, find_periodic_orbit,
                           format_sensitivity_table, perturbed_initial_state,
                           sensitivity_table, simulate_uncontrolled, stabilize)
from .simulation import SimulationError, Simulator, Trajectory
from .validation import run_validation

USAGE_ERROR, VALIDATION_ERROR = 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(USAGE_ERROR)


def _build_parser():
    parser = _Parser(prog="geoflap",
                     description="flapping-wing vehicle dynamics toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--morphology", help="morphology YAML (default: bundled)")
        p.add_argument("--config", help="run-config YAML")
        p.add_argument("--seed", type=int, help="RNG seed override")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       dest="overrides", help="dotted-path config override")
        return p

    p = common(sub.add_parser("simulate", help="one recorded run"))
    p.add_argument("--periods", type=float, help="simulated flapping periods")
    p.add_argument("--h", type=float, help="integrator step [s]")
    p.add_argument("--no-undulation", action="store_true")

    p = common(sub.add_parser("find-orbit", help="periodic-orbit search"))
    p.add_argument("--no-undulation", action="store_true",
                   help="freeze the abdomen during the search")

    common(sub.add_parser("compare-abdomen",
                          help="undulating vs fixed-abdomen study"))

    common(sub.add_parser("sensitivity",
                          help="control-offset sensitivity table"))

    p = common(sub.add_parser("stabilize", help="receding-horizon control run"))
    p.add_argument("--periods", type=float, help="number of controlled periods")

    common(sub.add_parser("validate", help="run the oracle suites"))
    return parser


def _setup(args):
    cfg = RunConfig.load(args.config, overrides=args.overrides)
    if args.seed is not None:
        cfg.data["seed"] = args.seed
    if args.morphology is not None:
        cfg.data["morphology"] = args.morphology
    path = cfg.get("morphology")
    morph = load_morphology(path) if path else default_morphology()
    os.makedirs(args.out, exist_ok=True)
    cfg.snapshot(os.path.join(args.out, "config_snapshot.yaml"))
    return cfg, morph


def _aero_from_config(cfg):
    kw = {"rho": float(cfg.get("aero.rho", 1.225)),
          "rotational_force": bool(cfg.get("aero.rotational_force", False))}
    n = cfg.get("aero.n_strips")
    if n is not None:
        kw["n_strips"] = int(n)
    lift = cfg.get("aero.coeff_table_lift")
    drag = cfg.get("aero.coeff_table_drag")
    if lift:
        kw["C_L"] = load_coeff_table(lift)
    if drag:
        kw["C_D"] = load_coeff_table(drag)
    return AeroModel(**kw)


def _search_opts(cfg, abdomen_fixed=False):
    s = cfg.get("search", {}) or {}
    return OrbitOptions(
        n_restarts=int(s.get("n_restarts", 4)),
        maxfev=int(s.get("maxfev", 800)),
        rng_seed=int(cfg.get("seed", 0)),
        n_steps=int(s.get("n_steps", 150)),
        n_strips=int(s.get("n_strips", 10)),
        w1=float(s.get("w1", 1.0)), w2=float(s.get("w2", 0.1)),
        eps_x=float(s.get("eps_x", 1e-3)), eps_v=float(s.get("eps_v", 1e-2)),
        penalty=float(s.get("penalty", 50.0)),
        restart_scale=float(s.get("restart_scale", 0.15)),
        abdomen_fixed=abdomen_fixed,
    )


def _maybe_plots(cfg):
    return bool(cfg.get("plots", True))


def _cmd_simulate(args):
    cfg, morph = _setup(args)
    if args.no_undulation:
        cfg.data.setdefault("orbit", {})["undulation"] = False
    p, _ = orbit_params_from_config(cfg)
    periods = float(args.periods if args.periods is not None
                    else cfg.get("sim.periods", 1))
    T = p.period
    h = float(args.h) if args.h is not None \
        else T / int(cfg.get("sim.steps_per_period", 1200))
    n_steps = int(round(periods * T / h))
    sim = Simulator(morph, p.motion(), _aero_from_config(cfg),
                    grav=float(cfg.get("gravity", 9.81)))
    try:
        traj = sim.simulate(p.initial_state(), 0.0, n_steps * h, h,
                            samples_per_period=int(
                                cfg.get("sim.samples_per_period", 200)))
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    traj.write_csv(os.path.join(args.out, "trajectory.csv"))
    traj.write_binary(os.path.join(args.out, "trajectory.bin"))
    if _maybe_plots(cfg):
        plots.plot_trajectory(traj, args.out)
    print(f"wrote {len(traj)} samples to {args.out}/trajectory.csv")
    return 0


def _write_orbit(path, p: OrbitParameterVector, report):
    with open(path, "w") as fh:
        yaml.safe_dump({"params": asdict(p), "report": report}, fh,
                       sort_keys=False)


def _cmd_find_orbit(args):
    cfg, morph = _setup(args)
    aero = _aero_from_config(cfg)
    fixed = bool(args.no_undulation)
    seed = default_seed(undulating=not fixed)
    opts = _search_opts(cfg, abdomen_fixed=fixed)
    try:
        p_star, report = find_periodic_orbit(seed, morph, aero, opts)
    except OrbitSearchError as exc:
        with open(os.path.join(args.out, "orbit_failure.yaml"), "w") as fh:
            yaml.safe_dump(exc.report or {"error": str(exc)}, fh)
        print(f"orbit search failed: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    _write_orbit(os.path.join(args.out, "orbit.yaml"), p_star, report)
    sim = Simulator(morph, p_star.motion(), aero)
    T = p_star.period
    traj = sim.simulate(p_star.initial_state(), 0.0, T, T / 1200,
                        samples_per_period=200)
    traj.write_csv(os.path.join(args.out, "orbit_trajectory.csv"))
    if _maybe_plots(cfg):
        plots.plot_trajectory(traj, args.out, prefix="orbit")
    print(f"J = {report['J']:.6g}, residuals x = {report['residuals']['x']:.3g}"
          f" m, v = {report['residuals']['v']:.3g} m/s")
    return 0


def _cmd_compare_abdomen(args):
    cfg, morph = _setup(args)
    try:
        rep = compare_abdomen(morph, _search_opts(cfg), _aero_from_config(cfg))
    except OrbitSearchError as exc:
        print(f"orbit search failed: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    for tag in ("undulating", "fixed"):
        s = rep[f"series_{tag}"]
        cols = list(s.keys())
        M = np.column_stack([s[c] for c in cols])
        with open(os.path.join(args.out, f"abdomen_{tag}.csv"), "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in M:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    summary = {
        "J_undulating": float(rep["J_undulating"]),
        "J_fixed": float(rep["J_fixed"]),
        "J_change_pct": float(rep["J_change_pct"]),
        "P_RL_max_diff": float(rep["P_RL_max_diff"]),
        "params_undulating": asdict(rep["p_undulating"]),
        "params_fixed": asdict(rep["p_fixed"]),
    }
    with open(os.path.join(args.out, "abdomen_summary.yaml"), "w") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)
    if _maybe_plots(cfg):
        plots.plot_comparison(rep, args.out)
    print(f"J undulating = {rep['J_undulating']:.6g} vs fixed = "
          f"{rep['J_fixed']:.6g} ({rep['J_change_pct']:+.1f}%)")
    return 0


def _cmd_sensitivity(args):
    cfg, morph = _setup(args)
    p, _ = orbit_params_from_config(cfg)
    table = sensitivity_table(
        p, morph, _aero_from_config(cfg),
        delta=float(cfg.get("sensitivity.delta", 0.05)),
        n_steps=int(cfg.get("sensitivity.n_steps", 400)))
    text = format_sensitivity_table(table)
    with open(os.path.join(args.out, "sensitivity.txt"), "w") as fh:
        fh.write(text)
    np.savetxt(os.path.join(args.out, "sensitivity.csv"), table,
               delimiter=",", fmt="%.17g")
    if _maybe_plots(cfg):
        plots.plot_sensitivity(table, args.out)
    print(text, end="")
    return 0


def _concat_csv(trajs, path):
    parts = [t.as_matrix() for t in trajs]
    M = np.vstack(parts)
    with open(path, "w") as fh:
        from .simulation import CSV_COLUMNS
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in M:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _cmd_stabilize(args):
    cfg, morph = _setup(args)
    aero = _aero_from_config(cfg)
    p, _ = orbit_params_from_config(cfg)
    ref = ReferenceOrbit(p, morph, aero)
    pert = default_perturbation()
    m = cfg.get("mpc", {}) or {}
    for key in ("dx", "dv", "dOm"):
        if key in m:
            pert[key] = np.asarray(m[key], dtype=float)
    ic = perturbed_initial_state(p, pert["dx"], pert["dv"], pert["dOm"],
                                 dR=pert["dR"])
    n_periods = int(args.periods if args.periods is not None
                    else m.get("n_periods", 4))
    opts = MpcOptions(
        maxfev=int(m.get("maxfev", 1200)),
        steps_per_period=int(m.get("steps_per_period", 100)),
        n_strips=int(m.get("n_strips", 8)),
        delta_bound=float(m.get("delta_bound", 0.3)),
    )
    result = stabilize(ic, ref, morph, aero, n_periods=n_periods, opts=opts)
    unc = simulate_uncontrolled(ic, ref, morph, aero, n_periods=n_periods)

    _concat_csv(result.trajectories, os.path.join(args.out, "controlled.csv"))
    _concat_csv(unc["trajectories"], os.path.join(args.out, "uncontrolled.csv"))
    with open(os.path.join(args.out, "stabilize_log.yaml"), "w") as fh:
        yaml.safe_dump({
            "times": [float(v) for v in result.times],
            "controlled_error": [float(v) for v in result.error_norms],
            "uncontrolled_error": [float(v) for v in unc["error_norms"]],
            "inner_objectives": [float(v) for v in result.objectives],
            "fallbacks": list(result.fallbacks),
            "schedules": [s.values.tolist() for s in result.schedules],
        }, fh, sort_keys=False)
    if _maybe_plots(cfg):
        plots.plot_stabilization(result.times, result.error_norms,
                                 unc["error_norms"], args.out)
    print(f"controlled error at end: {result.error_norms[-1]:.4g}, "
          f"uncontrolled: {unc['error_norms'][-1]:.4g}")
    return 0


def _cmd_validate(args):
    cfg, morph = _setup(args)
    results = run_validation(morph)
    all_ok = True
    width = max(len(name) for name, _, _, _ in results)
    for name, metric, tol, ok in results:
        all_ok &= ok
        print(f"{name.ljust(width)}  {metric:.3e}  (tol {tol:.0e})  "
              f"{'PASS' if ok else 'FAIL'}")
    return 0 if all_ok else VALIDATION_ERROR


_COMMANDS = {
    "simulate": _cmd_simulate,
    "find-orbit": _cmd_find_orbit,
    "compare-abdomen": _cmd_compare_abdomen,
    "sensitivity": _cmd_sensitivity,
    "stabilize": _cmd_stabilize,
    "validate": _cmd_validate,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except (SchemaError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
