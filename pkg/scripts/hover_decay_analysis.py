"""How fast can the identity-weighted LQR loops remove a tracking error?

Prints the closed-loop poles at hover and along the flip schedule, the
linear hover-loop response from the perturbed start, and the tracking
errors of the nonlinear LBFSF run at T_star and at the horizon. Used to
judge the tracking tolerances against what the gains can deliver.
"""

import numpy as np
import scipy.linalg as sla

from bicopter_flip import trajopt
from bicopter_flip.lincontrol import LqrWeights, hover_gain, linearize_schedule
from bicopter_flip.sim import PERTURBED_IC, SimScenario, simulate


def main():
    hg = hover_gain()
    A, B, K = hg.A[0], hg.B[0], hg.K[0]
    Acl = A - B @ K
    print("hover closed-loop poles:", np.round(np.sort_complex(np.linalg.eigvals(Acl)), 4))
    for t in (1.0, 1.6, 2.0, 3.0):
        e = sla.expm(Acl * t) @ PERTURBED_IC
        print(f"linear hover loop from the perturbed start, t={t:.1f} s: "
              f"|(e_r1, e_r2)| = {np.hypot(e[0], e[2]):.4f} m")

    traj = trajopt.solve(trajopt.flip_problem())
    sched = linearize_schedule(traj, LqrWeights())
    print(f"schedule: slowest closed-loop real part {sched.closed_loop_abscissa().max():.4f}")
    r = simulate(SimScenario("lbfsf", traj, x0=PERTURBED_IC, sched=sched))
    e = r.error()
    k = int(np.flatnonzero(r.t <= traj.T_star)[-1])
    print(f"nonlinear LBFSF: error at T_star {np.hypot(e[k, 0], e[k, 2]):.4f} m, at 3 s "
          f"{np.hypot(e[-1, 0], e[-1, 2]):.4f} m")
    rate = -np.linalg.eigvals(Acl).real.min()
    slow = -np.linalg.eigvals(Acl).real.max()
    span = r.t[-1] - traj.T_star
    print(f"decay over the {span:.2f} s hold: fastest mode x{np.exp(-rate * span):.3f}, "
          f"slowest mode x{np.exp(-slow * span):.3f}")


if __name__ == "__main__":
    main()
