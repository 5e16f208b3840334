"""Solve, train and simulate every controller mode from one perturbed start.

Writes the trajectory, gains, ARMA model and one sim log per mode to an
output directory and prints a metrics table.

    python scripts/run_case_studies.py --out runs/ [--config configs/default.ini]
"""

import argparse
import pathlib
import time

import numpy as np

from bicopter_flip import io
from bicopter_flip.arma import fit_theta, generate_training_data
from bicopter_flip.config import load_config
from bicopter_flip.lincontrol import hover_gain, linearize_schedule
from bicopter_flip.sim import MODES, PERTURBED_IC, SimScenario, metrics, simulate_batch
from bicopter_flip.trajopt import feasibility_report, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs", type=pathlib.Path)
    ap.add_argument("--config")
    ap.add_argument("--ic", default=",".join(map(str, PERTURBED_IC)))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config)
    x0 = np.array([float(v) for v in args.ic.split(",")])

    t0 = time.perf_counter()
    traj = solve(cfg.problem, cfg.solver)
    rep = feasibility_report(traj, cfg.problem)
    print(f"T_star {traj.T_star:.5f} s, max defect {rep.max_defect:.2e}, "
          f"{time.perf_counter() - t0:.1f} s")
    sched = linearize_schedule(traj, cfg.lqr, cfg.plant)
    hover = hover_gain(cfg.plant, cfg.lqr)
    a = cfg.arma
    ds = generate_training_data(traj, sched, a.runs, a.seed, a.ic_halfwidth, cfg.sim.T_s,
                                a.horizon, a.l_w, cfg.sim.h, cfg.plant)
    model = fit_theta(ds, a.l_w, a.ridge, a.wiring)
    io.write_trajectory(args.out / "traj.csv", traj, cfg.solver.eq_tol, cfg.solver.stat_tol)
    io.write_gains(args.out / "gains.csv", sched)
    io.write_arma(args.out / "model.txt", model)

    print(f"{'mode':<12} {'rms pos':>9} {'term pos':>9} {'term psi':>9} {'settled':>8}")
    for mode in MODES:
        s = SimScenario(mode, traj, x0=x0, sched=sched, hover=hover, arma=model,
                        fuzzy=cfg.fuzzy, T_s=cfg.sim.T_s, h=cfg.sim.h,
                        horizon=cfg.sim.horizon, params=cfg.plant)
        r = simulate_batch(s).run(0)
        io.write_sim_log(args.out / f"sim_{mode}.csv", r)
        m = metrics(r)
        flag = " diverged" if m.diverged else ""
        print(f"{mode:<12} {m.rms_position:>9.4f} {m.terminal_position:>9.4f} "
              f"{m.terminal_psi:>9.4f} {str(m.settled):>8}{flag}")


if __name__ == "__main__":
    main()
