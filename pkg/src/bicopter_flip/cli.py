"""Command-line pipeline: optimize -> gains -> train -> simulate -> eval.

Each command prints one machine-readable ``RESULT key=value ...`` line.
Exit codes: 0 success, 1 usage or configuration error, 2 infeasible problem
or degenerate training data, 3 stalled solver, 4 diverged simulation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io
from .arma import DegenerateData, fit_theta, generate_training_data
from .config import ConfigError, RunConfig, load_config
from .lincontrol import CareError, hover_gain, linearize_schedule
from .sim import MODES, Diverged, SimScenario, metrics, monte_carlo, simulate
from .trajopt import Infeasible, Stalled, feasibility_report, solve

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_STALLED, EXIT_DIVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("bicopter_flip")


class UsageError(Exception):
    pass


def _result(**kw):
    parts = []
    for k, v in kw.items():
        if isinstance(v, (float, np.floating)):
            v = io.fmt(v)
        parts.append(f"{k}={v}")
    print("RESULT " + " ".join(parts))


def _mode(s: str) -> str:
    m = s.replace("-", "_")
    if m not in MODES:
        raise argparse.ArgumentTypeError(f"unknown mode {s!r}; choose from {', '.join(MODES)}")
    return m


def _ic(s: str) -> np.ndarray:
    try:
        v = np.array([float(p) for p in s.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad initial condition {s!r}") from None
    if v.shape != (6,):
        raise argparse.ArgumentTypeError("initial condition needs 6 comma-separated values")
    return v


# ------------------------------------------------------------------ commands
def cmd_optimize(cfg: RunConfig, out_path) -> int:
    try:
        traj = solve(cfg.problem, cfg.solver)
    except Infeasible as e:
        print(f"error: infeasible: {e}", file=sys.stderr)
        _result(command="optimize", status="infeasible")
        return EXIT_INFEASIBLE
    except Stalled as e:
        print(f"error: stalled: {e}", file=sys.stderr)
        _result(command="optimize", status="stalled")
        return EXIT_STALLED
    rep = feasibility_report(traj, cfg.problem)
    io.write_trajectory(out_path, traj, cfg.solver.eq_tol, cfg.solver.stat_tol)
    print(f"T_star = {traj.T_star:.6f} s  (N = {traj.N}, dt = {traj.dt:.6g} s)")
    print(f"max defect {rep.max_defect:.3e}  bound violation {rep.max_bound_violation:.3e}  "
          f"final state error {rep.final_state_error:.3e}  final input error "
          f"{rep.final_input_error:.3e}")
    _result(command="optimize", status="ok", T_star=traj.T_star, N=traj.N,
            max_defect=rep.max_defect, bound_violation=rep.max_bound_violation,
            outer=traj.outer_iterations, inner=traj.inner_iterations, out=out_path)
    return EXIT_OK


def cmd_gains(cfg: RunConfig, traj_path, out_path, hover: bool) -> int:
    try:
        if hover:
            sched = hover_gain(cfg.plant, cfg.lqr)
        else:
            traj = io.read_trajectory(traj_path)
            sched = linearize_schedule(traj, cfg.lqr, cfg.plant)
    except CareError as e:
        print(f"error: {e}", file=sys.stderr)
        _result(command="gains", status="failed")
        return EXIT_INFEASIBLE
    io.write_gains(out_path, sched)
    abscissa = sched.closed_loop_abscissa().max()
    _result(command="gains", status="ok", records=len(sched), hover=str(hover).lower(),
            max_closed_loop_real=abscissa, out=out_path)
    return EXIT_OK


def cmd_train(cfg: RunConfig, traj_path, gains_path, out_path, runs=None, seed=None) -> int:
    a = cfg.arma
    runs = a.runs if runs is None else runs
    seed = a.seed if seed is None else seed
    if runs < 0:
        raise UsageError("--runs must be >= 0")
    traj = io.read_trajectory(traj_path)
    sched = io.read_gains(gains_path)
    if sched.hover:
        print("warning: training against a hover-only gain file", file=sys.stderr)
    elif len(sched) != traj.N + 1:
        raise UsageError(f"gain file has {len(sched)} records, trajectory has {traj.N + 1} knots")
    ds = generate_training_data(traj, sched, runs, seed, a.ic_halfwidth, cfg.sim.T_s,
                                a.horizon, a.l_w, cfg.sim.h, cfg.plant)
    try:
        model = fit_theta(ds, a.l_w, a.ridge, a.wiring)
    except DegenerateData as e:
        print(f"error: DegenerateData: {e}", file=sys.stderr)
        _result(command="train", status="degenerate", runs=runs)
        return EXIT_INFEASIBLE
    io.write_arma(out_path, model)
    rp, ra = model.reports
    _result(command="train", status="ok", runs=ds.n_runs, excluded=ds.excluded, seed=seed,
            rows=rp.rows, rms_thrust=float(rp.rms[0]), rms_torque=float(ra.rms[-1]),
            grad_pos=rp.gradient_norm, grad_ang=ra.gradient_norm, out=out_path)
    return EXIT_OK


def _scenario(cfg: RunConfig, mode, traj_path, gains_path, model_path, x0) -> SimScenario:
    traj = io.read_trajectory(traj_path)
    sched = arma = None
    if mode == "lbfsf":
        if gains_path is None:
            raise UsageError("mode lbfsf needs --gains")
        sched = io.read_gains(gains_path)
        if sched.hover:
            raise UsageError("mode lbfsf needs a full gain schedule, not a hover gain file")
        if len(sched) != traj.N + 1:
            raise UsageError(f"gain file has {len(sched)} records, trajectory has "
                             f"{traj.N + 1} knots")
    if mode in ("arma", "fuzzy"):
        if model_path is None:
            raise UsageError(f"mode {mode} needs --model")
        arma = io.read_arma(model_path)
    hover = hover_gain(cfg.plant, cfg.lqr)
    s = cfg.sim
    return SimScenario(mode, traj, x0=x0, sched=sched, hover=hover, arma=arma, fuzzy=cfg.fuzzy,
                       T_s=s.T_s, h=s.h, horizon=s.horizon, params=cfg.plant)


def cmd_simulate(cfg: RunConfig, mode, traj_path, out_path, gains_path=None, model_path=None,
                 ic=None) -> int:
    x0 = np.zeros(6) if ic is None else ic
    scen = _scenario(cfg, mode, traj_path, gains_path, model_path, x0)
    code = EXIT_OK
    try:
        res = simulate(scen)
    except Diverged as e:
        res = e.result
        code = EXIT_DIVERGED
        print(f"error: diverged: {e}", file=sys.stderr)
    io.write_sim_log(out_path, res, {"x0": io.fmt_vec(x0)})
    m = metrics(res)
    print(f"{mode}: rms position {m.rms_position:.4f} m, terminal position "
          f"{m.terminal_position:.4f} m, terminal pitch {m.terminal_psi:.4f} rad")
    _result(command="simulate", status="diverged" if code else "ok", mode=mode,
            rms_position=m.rms_position, terminal_position=m.terminal_position,
            terminal_psi=m.terminal_psi, settled=str(m.settled).lower(), out=out_path)
    return code


def cmd_eval(cfg: RunConfig, modes, runs, seed, traj_path, gains_path=None, model_path=None,
             json_path=None, ic_halfwidth=None, ics=None) -> int:
    hw = cfg.arma.ic_halfwidth if ic_halfwidth is None else ic_halfwidth
    table = {}
    for mode in modes:
        scen = _scenario(cfg, mode, traj_path, gains_path, model_path, np.zeros(6))
        summ = monte_carlo(scen, runs, seed, hw, x0s=ics)
        table[mode] = {
            "runs": len(summ.runs),
            "diverged": summ.n_diverged,
            "mean": summ.mean,
            "max": summ.max,
            "per_run": [m.as_dict() for m in summ.runs],
        }
    cols = ("rms_position", "rms_psi", "terminal_position")
    print(f"{'mode':<12} {'runs':>5} {'div':>4} " + " ".join(f"{c + '(mean)':>24}" for c in cols)
          + f" {'settled':>8}")
    for mode, row in table.items():
        print(f"{mode:<12} {row['runs']:>5} {row['diverged']:>4} "
              + " ".join(f"{row['mean'][c]:>24.6f}" for c in cols)
              + f" {row['mean']['settled_fraction']:>8.2f}")
    if json_path:
        with open(json_path, "w") as fh:
            json.dump({"seed": seed, "runs": runs, "ic_halfwidth": hw, "modes": table}, fh,
                      indent=1, sort_keys=True, default=float)
            fh.write("\n")
    _result(command="eval", status="ok", modes=",".join(modes), runs=runs, seed=seed,
            **{f"{m}_rms": table[m]["mean"]["rms_position"] for m in modes})
    return EXIT_OK


# ---------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bicopter-flip", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="INI configuration file (defaults if omitted)")

    sp = sub.add_parser("optimize", help="solve the minimum-time flip problem")
    common(sp)
    sp.add_argument("-o", "--out", required=True, help="trajectory file to write")

    sp = sub.add_parser("gains", help="LQR gain schedule along a trajectory")
    common(sp)
    sp.add_argument("traj", nargs="?", help="trajectory file (not needed with --hover)")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--hover", action="store_true", help="single gain at hover")

    sp = sub.add_parser("train", help="fit the ARMA controllers from LBFSF rollouts")
    common(sp)
    sp.add_argument("traj")
    sp.add_argument("gains")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("simulate", help="closed-loop simulation of one initial condition")
    common(sp)
    sp.add_argument("--mode", type=_mode, required=True, help=", ".join(MODES))
    sp.add_argument("--traj", required=True)
    sp.add_argument("--gains")
    sp.add_argument("--model", help="ARMA model file")
    sp.add_argument("--ic", type=_ic, help="r1,v1,r2,v2,psi,omega (default zeros)")
    sp.add_argument("-o", "--out", required=True, help="sim log to write")

    sp = sub.add_parser("eval", help="Monte Carlo comparison of controller modes")
    common(sp)
    sp.add_argument("--modes", default="open_loop,lbfsf,lbfsf_hover,arma,fuzzy")
    sp.add_argument("--runs", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ic-halfwidth", type=float)
    sp.add_argument("--ic", type=_ic, help="evaluate this single initial condition instead")
    sp.add_argument("--traj", required=True)
    sp.add_argument("--gains")
    sp.add_argument("--model")
    sp.add_argument("--json", help="write the machine-readable summary here")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "optimize":
            return cmd_optimize(cfg, args.out)
        if args.command == "gains":
            if not args.hover and not args.traj:
                raise UsageError("gains needs a trajectory file unless --hover is given")
            return cmd_gains(cfg, args.traj, args.out, args.hover)
        if args.command == "train":
            return cmd_train(cfg, args.traj, args.gains, args.out, args.runs, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.mode, args.traj, args.out, args.gains, args.model,
                                args.ic)
        if args.command == "eval":
            modes = [_mode(m) for m in args.modes.split(",") if m]
            ics = None if args.ic is None else args.ic[None]
            runs = 1 if ics is not None else args.runs
            return cmd_eval(cfg, modes, runs, args.seed, args.traj, args.gains, args.model,
                            args.json, args.ic_halfwidth, ics)
    except (ConfigError, UsageError, io.FormatError, argparse.ArgumentTypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
