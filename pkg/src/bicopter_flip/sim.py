"""Deterministic closed-loop simulation at a fixed controller rate.

The plant is integrated with RK4 at step ``h``; the controller runs every
``T_s = n_sub * h`` and its output is held in between. All runs of a batch
advance together, one row per initial condition.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .arma import ArmaModel, feedback_output
from .fuzzy import FuzzyConfig, blend, memberships, wrap_angle
from .lincontrol import GainSchedule, lbfsf_control
from .trajopt import OptimalTrajectory

MODES = ("open_loop", "lbfsf", "lbfsf_hover", "arma", "fuzzy")

PERTURBED_IC = np.array([0.32, 0.32, 0.22, -0.35, 0.16, 0.02])


class Diverged(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class SimScenario:
    mode: str
    traj: OptimalTrajectory
    x0: np.ndarray = field(default_factory=lambda: np.zeros(dynamics.NX))
    sched: GainSchedule | None = None
    hover: GainSchedule | None = None
    arma: ArmaModel | None = None
    fuzzy: FuzzyConfig = field(default_factory=FuzzyConfig)
    T_s: float = 1e-3
    h: float = 1e-4
    horizon: float = 3.0
    params: dynamics.PlantParams = dynamics.DEFAULT_PARAMS
    blowup: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode: unknown {self.mode!r}, expected one of {MODES}")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape[-1] != dynamics.NX:
            raise ValueError(f"x0: expected {dynamics.NX} components")
        if not (self.T_s > 0 and self.h > 0):
            raise ValueError("T_s and h must be positive")
        ratio = self.T_s / self.h
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(f"T_s={self.T_s} is not an integer multiple of h={self.h}")
        steps = self.horizon / self.T_s
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ValueError(f"horizon={self.horizon} is not a multiple of T_s={self.T_s}")
        if self.horizon < self.traj.T_star:
            raise ValueError("horizon: must cover the whole maneuver")
        need = {"lbfsf": ("sched",), "lbfsf_hover": ("hover",), "arma": ("arma",),
                "fuzzy": ("arma", "hover")}.get(self.mode, ())
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"mode {self.mode!r} requires {name}")

    @property
    def n_sub(self) -> int:
        return int(round(self.T_s / self.h))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.T_s))


@dataclass
class SimResult:
    """Log at the controller rate; arrays carry a leading run axis when batched."""

    t: np.ndarray
    x: np.ndarray
    x_star: np.ndarray
    u_star: np.ndarray
    u_fb: np.ndarray
    u_total: np.ndarray
    mu_arma: np.ndarray
    mu_lqr: np.ndarray
    mode: str
    T_star: float
    diverged: np.ndarray | bool = False
    diverged_at: np.ndarray | int = -1

    @property
    def batched(self) -> bool:
        return self.x.ndim == 3

    def run(self, i: int) -> "SimResult":
        """One run of a batched result, truncated at divergence."""
        if not self.batched:
            return self
        n = len(self.t) if self.diverged_at[i] < 0 else self.diverged_at[i] + 1
        return SimResult(self.t[:n], self.x[i, :n], self.x_star[:n], self.u_star[:n],
                         self.u_fb[i, :n], self.u_total[i, :n], self.mu_arma[i, :n],
                         self.mu_lqr[i, :n], self.mode, self.T_star,
                         bool(self.diverged[i]), int(self.diverged_at[i]))

    def error(self):
        return self.x - self.x_star


def reference_at(t, traj: OptimalTrajectory):
    """``(x*, u*)``: knot ``floor(t/dt)`` before ``T_star``, ``(x_f, u_f)`` after."""
    return traj.reference_at(t)


def _controller_output(s: SimScenario, t, x, x_star):
    """Feedback ``u_fb`` and memberships for a batch of states at time ``t``."""
    B = x.shape[0]
    zeros = np.zeros(B)
    if s.mode == "open_loop":
        return np.zeros((B, dynamics.NU)), zeros, zeros
    if s.mode == "lbfsf":
        return lbfsf_control(t, x, s.traj, s.sched), zeros, zeros
    if s.mode == "lbfsf_hover":
        return lbfsf_control(t, x, s.traj, s.hover), zeros, zeros
    u_arma = s.arma.step(feedback_output(x, x_star))
    if s.mode == "arma":
        return u_arma, np.ones(B), zeros
    u_lqr = lbfsf_control(t, x, s.traj, s.hover)
    gamma = np.abs(wrap_angle(x[:, dynamics.PSI]))
    mu_a, mu_l = memberships(np.minimum(gamma, np.pi), s.fuzzy)
    return blend(u_arma, u_lqr, mu_a, mu_l), mu_a, mu_l


def simulate_batch(s: SimScenario) -> SimResult:
    """Simulate every row of ``s.x0`` (shape ``(B, 6)``) in lockstep.

    Runs whose state exceeds ``s.blowup`` in magnitude are frozen at that
    sample and flagged; the others continue.
    """
    x = np.array(np.atleast_2d(s.x0), dtype=float)
    B = x.shape[0]
    n = s.n_steps
    t = np.arange(n + 1) * s.T_s
    x_star, u_star = reference_at(t, s.traj)
    if s.arma is not None:
        s = copy.copy(s)
        s.arma = copy.deepcopy(s.arma)
        s.arma.reset((B,))

    X = np.zeros((B, n + 1, dynamics.NX))
    U_fb = np.zeros((B, n + 1, dynamics.NU))
    U = np.zeros((B, n + 1, dynamics.NU))
    MA = np.zeros((B, n + 1))
    ML = np.zeros((B, n + 1))
    alive = np.ones(B, dtype=bool)
    div_at = np.full(B, -1)
    for k in range(n + 1):
        u_fb, mu_a, mu_l = _controller_output(s, t[k], x, x_star[k])
        u = u_star[k] + u_fb
        X[:, k] = x
        U_fb[:, k] = u_fb
        U[:, k] = u
        MA[:, k] = mu_a
        ML[:, k] = mu_l
        if k == n:
            break
        x_next = dynamics.rk4_hold(x, u, s.h, s.n_sub, s.params)
        bad = alive & ~(np.abs(x_next).max(axis=1) <= s.blowup)
        if bad.any():
            div_at[bad] = k
            alive &= ~bad
        x = np.where(alive[:, None], x_next, x)
    if (~alive).any():
        # freeze the log of diverged runs at their last finite sample
        for i in np.flatnonzero(~alive):
            j = div_at[i]
            X[i, j + 1 :] = X[i, j]
            U_fb[i, j + 1 :] = U_fb[i, j]
            U[i, j + 1 :] = U[i, j]
    return SimResult(t, X, x_star, u_star, U_fb, U, MA, ML, s.mode, s.traj.T_star,
                     ~alive, div_at)


def simulate(s: SimScenario) -> SimResult:
    """Single-run simulation; raises :class:`Diverged` with the partial log."""
    if s.x0.ndim != 1:
        raise ValueError("simulate takes one initial state; use simulate_batch")
    res = simulate_batch(s).run(0)
    if res.diverged:
        raise Diverged(f"state exceeded {s.blowup:g} at t={res.t[-1]:.4f} s", res)
    return res


@dataclass
class Metrics:
    rms_r1: float
    rms_r2: float
    rms_psi: float
    rms_position: float
    terminal_position: float
    terminal_r1: float
    terminal_r2: float
    terminal_psi: float
    max_abs_u: np.ndarray
    settled: bool
    diverged: bool
    horizon: float

    def as_dict(self):
        d = dict(self.__dict__)
        d["max_abs_uT"], d["max_abs_uR"] = (float(v) for v in d.pop("max_abs_u"))
        return d


def metrics(r: SimResult, settle_window: float = 1.0, pos_tol: float = 0.1,
            ang_tol: float = 0.1) -> Metrics:
    """Tracking metrics of one run.

    RMS errors are taken over ``[0, T_star]``; terminal errors at the last
    logged sample (the divergence point for a diverged run); ``settled``
    requires the planar error and wrapped pitch error to stay within
    tolerance over the final ``settle_window`` seconds.
    """
    e = r.error()
    man = r.t <= r.T_star + 1e-12
    e_m = e[man]
    pos = np.hypot(e[:, 0], e[:, 2])
    ang = np.abs(wrap_angle(e[:, 4]))
    tail = r.t >= r.t[-1] - settle_window - 1e-12
    return Metrics(
        rms_r1=float(np.sqrt(np.mean(e_m[:, 0] ** 2))),
        rms_r2=float(np.sqrt(np.mean(e_m[:, 2] ** 2))),
        rms_psi=float(np.sqrt(np.mean(e_m[:, 4] ** 2))),
        rms_position=float(np.sqrt(np.mean(pos[man] ** 2))),
        terminal_position=float(pos[-1]),
        terminal_r1=float(e[-1, 0]),
        terminal_r2=float(e[-1, 2]),
        terminal_psi=float(wrap_angle(e[-1, 4])),
        max_abs_u=np.abs(r.u_total).max(axis=0),
        settled=bool(not r.diverged and np.all(pos[tail] <= pos_tol) and np.all(ang[tail] <= ang_tol)),
        diverged=bool(r.diverged),
        horizon=float(r.t[-1]),
    )


def sample_initial_states(n_runs: int, seed: int, halfwidth: float = 0.5) -> np.ndarray:
    """Per-run derived seeds; run ``i`` does not depend on ``n_runs``."""
    children = np.random.SeedSequence(seed).spawn(n_runs)
    return np.array(
        [np.random.default_rng(c).uniform(-halfwidth, halfwidth, dynamics.NX) for c in children]
    ).reshape(n_runs, dynamics.NX)


@dataclass
class Summary:
    mode: str
    runs: list
    n_diverged: int
    mean: dict
    max: dict
    initial_states: np.ndarray = field(repr=False, default=None)


_AGG_KEYS = ("rms_r1", "rms_r2", "rms_psi", "rms_position", "terminal_position")


def summarize(mode, per_run, x0s) -> Summary:
    ok = [m for m in per_run if not m.diverged]
    mean = {k: float(np.mean([getattr(m, k) for m in ok])) if ok else float("nan") for k in _AGG_KEYS}
    mx = {k: float(np.max([getattr(m, k) for m in ok])) if ok else float("nan") for k in _AGG_KEYS}
    mean["settled_fraction"] = float(np.mean([m.settled for m in per_run])) if per_run else float("nan")
    return Summary(mode, per_run, sum(m.diverged for m in per_run), mean, mx, x0s)


def monte_carlo(scenario: SimScenario, n_runs: int, seed: int, ic_halfwidth: float = 0.5,
                x0s=None) -> Summary:
    """Batch of seeded initial conditions (or explicit ``x0s``) in ``scenario.mode``."""
    x0s = sample_initial_states(n_runs, seed, ic_halfwidth) if x0s is None else np.atleast_2d(x0s)
    s = copy.copy(scenario)
    s.x0 = x0s
    res = simulate_batch(s)
    per_run = [metrics(res.run(i)) for i in range(len(x0s))]
    return summarize(scenario.mode, per_run, x0s)
