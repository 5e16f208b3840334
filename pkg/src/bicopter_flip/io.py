"""Plain-text file formats.

Every float is written with 17 significant digits so that reading a file
back reproduces the in-memory values exactly. Lines starting with ``#`` form
a ``key=value`` preamble.
"""

from __future__ import annotations

import io as _io
from pathlib import Path

import numpy as np

from .arma import ArmaChannel, ArmaController, ArmaModel
from .dynamics import INPUT_NAMES, STATE_NAMES
from .lincontrol import GainSchedule, LqrWeights
from .trajopt import OptimalTrajectory

TRAJ_HEADER = ("k", "t") + STATE_NAMES + INPUT_NAMES
GAIN_HEADER = ("k", "t") + tuple(f"K{i}{j}" for i in (1, 2) for j in range(1, 7))
SIM_HEADER = (
    ("t",) + STATE_NAMES + tuple(s + "s" for s in STATE_NAMES) + ("uTs", "uRs", "uTfb", "uRfb")
    + INPUT_NAMES + ("mu_arma", "mu_lqr")
)


class FormatError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def fmt_vec(a) -> str:
    return ",".join(fmt(v) for v in np.ravel(a))


def parse_vec(s: str) -> np.ndarray:
    s = s.strip()
    if not s:
        return np.zeros(0)
    return np.array([float(v) for v in s.split(",")])


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise FormatError(f"not a boolean: {s!r}")


def _write_table(path, meta: dict, header, rows: np.ndarray, int_cols=1):
    buf = _io.StringIO()
    for key, val in meta.items():
        buf.write(f"# {key}={val}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        head = [str(int(v)) for v in row[:int_cols]]
        buf.write(",".join(head + [fmt(v) for v in row[int_cols:]]) + "\n")
    Path(path).write_text(buf.getvalue())


def _read_table(path, header):
    meta = {}
    body = []
    seen_header = False
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        if not seen_header:
            cols = tuple(c.strip() for c in line.split(","))
            if cols != tuple(header):
                raise FormatError(f"{path}: line {ln}: unexpected header {line!r}")
            seen_header = True
            continue
        vals = line.split(",")
        if len(vals) != len(header):
            raise FormatError(f"{path}: line {ln}: expected {len(header)} fields, got {len(vals)}")
        body.append([float(v) for v in vals])
    if not seen_header:
        raise FormatError(f"{path}: missing header line")
    return meta, np.array(body).reshape(-1, len(header))


# ---------------------------------------------------------------- trajectory
def write_trajectory(path, traj: OptimalTrajectory, eq_tol=None, stat_tol=None):
    meta = {"N": traj.N, "T_star": fmt(traj.T_star), "dt": fmt(traj.dt)}
    if eq_tol is not None:
        meta["eq_tol"] = fmt(eq_tol)
    if stat_tol is not None:
        meta["stat_tol"] = fmt(stat_tol)
    meta.update({
        "feasibility": fmt(traj.feasibility),
        "objective": fmt(traj.objective),
        "x_f": fmt_vec(traj.x_f),
        "u_f": fmt_vec(traj.u_f),
    })
    k = np.arange(traj.N + 1)
    rows = np.column_stack([k, traj.times, traj.xs, traj.us])
    _write_table(path, meta, TRAJ_HEADER, rows)


def read_trajectory(path) -> OptimalTrajectory:
    meta, rows = _read_table(path, TRAJ_HEADER)
    try:
        T_star = float(meta["T_star"])
    except KeyError:
        raise FormatError(f"{path}: preamble lacks T_star") from None
    if "N" in meta and int(meta["N"]) != len(rows) - 1:
        raise FormatError(f"{path}: N={meta['N']} but {len(rows)} knot rows")
    if not np.array_equal(rows[:, 0], np.arange(len(rows))):
        raise FormatError(f"{path}: knot indices are not 0..N in order")
    return OptimalTrajectory(
        T_star=T_star,
        xs=rows[:, 2:8].copy(),
        us=rows[:, 8:10].copy(),
        feasibility=float(meta.get("feasibility", "0")),
        objective=float(meta.get("objective", "nan")),
        x_f=parse_vec(meta["x_f"]) if "x_f" in meta else None,
        u_f=parse_vec(meta["u_f"]) if "u_f" in meta else None,
    )


# -------------------------------------------------------------------- gains
def write_gains(path, sched: GainSchedule):
    w = sched.weights
    meta = {"hover": fmt(sched.hover), "records": len(sched.K),
            "R1": fmt_vec(w.R1), "R2": fmt_vec(w.R2)}
    k = np.arange(len(sched.K))
    rows = np.column_stack([k, sched.times, sched.K.reshape(len(sched.K), -1)])
    _write_table(path, meta, GAIN_HEADER, rows)


def read_gains(path) -> GainSchedule:
    meta, rows = _read_table(path, GAIN_HEADER)
    n = len(rows)
    R1 = parse_vec(meta["R1"]).reshape(6, 6) if "R1" in meta else np.eye(6)
    R2 = parse_vec(meta["R2"]).reshape(2, 2) if "R2" in meta else np.eye(2)
    return GainSchedule(
        times=rows[:, 1].copy(),
        A=None,
        B=None,
        K=rows[:, 2:].reshape(n, 2, 6).copy(),
        hover=_parse_bool(meta.get("hover", "false")),
        weights=LqrWeights(R1, R2),
    )


# --------------------------------------------------------------------- arma
def write_arma(path, model: ArmaModel):
    lines = ["# ARMA controller model", f"l_w = {model.l_w}", f"wiring = {model.wiring}",
             f"ridge = {fmt(model.ridge)}", f"controllers = {len(model.controllers)}"]
    for i, (c, ch) in enumerate(zip(model.controllers, model.channels), 1):
        p = f"controller.{i}."
        lines += [
            p + f"name = {ch.name}",
            p + f"n_y = {c.n_y}",
            p + f"n_u = {c.n_u}",
            p + "y_cols = " + ",".join(str(v) for v in ch.y_cols),
            p + "u_cols = " + ",".join(str(v) for v in ch.u_cols),
            p + f"theta_shape = {c.theta.shape[0]},{c.theta.shape[1]}",
            p + "theta = " + fmt_vec(c.theta),
        ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_arma(path) -> ArmaModel:
    kv = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise FormatError(f"{path}: line {ln}: expected key = value")
        kv[key.strip()] = val.strip()
    try:
        l_w = int(kv["l_w"])
        n = int(kv["controllers"])
        controllers, channels = [], []
        for i in range(1, n + 1):
            p = f"controller.{i}."
            ch = ArmaChannel(
                kv[p + "name"],
                tuple(int(v) for v in kv[p + "y_cols"].split(",")),
                tuple(int(v) for v in kv[p + "u_cols"].split(",")),
            )
            shape = tuple(int(v) for v in kv[p + "theta_shape"].split(","))
            theta = parse_vec(kv[p + "theta"]).reshape(shape)
            controllers.append(ArmaController(l_w, int(kv[p + "n_y"]), int(kv[p + "n_u"]), theta))
            channels.append(ch)
    except KeyError as e:
        raise FormatError(f"{path}: missing key {e.args[0]}") from None
    return ArmaModel(controllers, tuple(channels), kv.get("wiring", "decoupled"),
                     float(kv.get("ridge", "0")))


# ---------------------------------------------------------------------- sim
def write_sim_log(path, r, meta: dict | None = None):
    rows = np.column_stack([r.t, r.x, r.x_star, r.u_star, r.u_fb, r.u_total, r.mu_arma, r.mu_lqr])
    m = {"mode": r.mode, "T_star": fmt(r.T_star), "samples": len(r.t),
         "diverged": fmt(bool(r.diverged))}
    m.update(meta or {})
    _write_table(path, m, SIM_HEADER, rows, int_cols=0)


def read_sim_log(path):
    from .sim import SimResult

    meta, rows = _read_table(path, SIM_HEADER)
    return SimResult(
        t=rows[:, 0].copy(), x=rows[:, 1:7].copy(), x_star=rows[:, 7:13].copy(),
        u_star=rows[:, 13:15].copy(), u_fb=rows[:, 15:17].copy(), u_total=rows[:, 17:19].copy(),
        mu_arma=rows[:, 19].copy(), mu_lqr=rows[:, 20].copy(), mode=meta.get("mode", ""),
        T_star=float(meta.get("T_star", "nan")),
        diverged=_parse_bool(meta.get("diverged", "false")),
    )
