"""Plot states and inputs of one or more sim logs (needs matplotlib).

    python scripts/plot_sim_log.py runs/sim_lbfsf.csv runs/sim_fuzzy.csv -o flip.png
"""

import argparse

from bicopter_flip import io

LABELS = ("r1 [m]", "v1 [m/s]", "r2 [m]", "v2 [m/s]", "psi [rad]", "omega [rad/s]")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("logs", nargs="+")
    ap.add_argument("-o", "--out", default="sim.png")
    args = ap.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(4, 2, figsize=(10, 11), sharex=True)
    ax = axes.ravel()
    for i, path in enumerate(args.logs):
        r = io.read_sim_log(path)
        for j in range(6):
            ax[j].plot(r.t, r.x[:, j], label=r.mode, color=f"C{i}")
            if i == 0:
                ax[j].plot(r.t, r.x_star[:, j], "k--", lw=0.8, label="reference")
        for j in range(2):
            ax[6 + j].plot(r.t, r.u_total[:, j], color=f"C{i}")
    for j, lab in enumerate(LABELS + ("uT [m/s^2]", "uR [rad/s^2]")):
        ax[j].set_ylabel(lab)
        ax[j].grid(alpha=0.3)
    ax[0].legend(fontsize=8)
    ax[6].set_xlabel("t [s]")
    ax[7].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
