"""ARMA feedback controllers fitted to LBFSF rollouts.

An ARMA controller produces ``u_k = phi_k @ theta`` where the regressor

    phi_k = [u_{k-1}, ..., u_{k-l_w}, y_{k-1}, ..., y_{k-l_w}]

stacks its own past outputs and past measured errors, most recent first and
component-major within each lag. The measurement ``y_k`` only enters from the
next step on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# y_fb components: r1 - r1*, r2 - r2*, psi - psi*
Y_INDEX = (0, 2, 4)


class DegenerateData(ValueError):
    pass


def regressor(hist_u, hist_y):
    """Flatten newest-first histories ``(..., l_w, n_u)`` and ``(..., l_w, n_y)``."""
    hist_u = np.asarray(hist_u, dtype=float)
    hist_y = np.asarray(hist_y, dtype=float)
    if hist_u.ndim == 1:
        hist_u = hist_u[:, None]
    if hist_y.ndim == 1:
        hist_y = hist_y[:, None]
    lead = hist_u.shape[:-2]
    return np.concatenate(
        [hist_u.reshape(lead + (-1,)), hist_y.reshape(hist_y.shape[:-2] + (-1,))], axis=-1
    )


@dataclass
class ArmaController:
    l_w: int
    n_y: int
    n_u: int
    theta: np.ndarray
    hist_u: np.ndarray = field(default=None, repr=False)
    hist_y: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.l_w < 1:
            raise ValueError("l_w must be >= 1")
        self.theta = np.asarray(self.theta, dtype=float).reshape(self.n_regressor, self.n_u)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        if self.hist_u is None or self.hist_y is None:
            self.reset()

    @property
    def n_regressor(self) -> int:
        return self.l_w * (self.n_u + self.n_y)

    def reset(self, batch: tuple = ()):
        self.hist_u = np.zeros(tuple(batch) + (self.l_w, self.n_u))
        self.hist_y = np.zeros(tuple(batch) + (self.l_w, self.n_y))

    def regressor(self):
        return regressor(self.hist_u, self.hist_y)

    def step(self, y_k):
        return arma_step(self, y_k)


def arma_step(c: ArmaController, y_k):
    """Output from the current histories, then shift ``(u_k, y_k)`` in."""
    y_k = np.asarray(y_k, dtype=float)
    if y_k.shape[-1:] != (c.n_y,) or y_k.shape[:-1] != c.hist_y.shape[:-2]:
        raise ValueError(
            f"measurement shape {y_k.shape} does not match history batch "
            f"{c.hist_y.shape[:-2]} and n_y={c.n_y}"
        )
    u_k = c.regressor() @ c.theta
    c.hist_u = np.concatenate([u_k[..., None, :], c.hist_u[..., :-1, :]], axis=-2)
    c.hist_y = np.concatenate([y_k[..., None, :], c.hist_y[..., :-1, :]], axis=-2)
    return u_k


def lagged_regressors(u_seq, y_seq, l_w):
    """Regressors for every sample of one or more runs.

    ``u_seq`` is ``(..., K, n_u)`` and ``y_seq`` is ``(..., K, n_y)``; the result
    is ``(..., K, l_w*(n_u+n_y))`` with zero padding before the first sample
    of each run, so runs never leak into each other.
    """
    u_seq = np.asarray(u_seq, dtype=float)
    y_seq = np.asarray(y_seq, dtype=float)
    K = u_seq.shape[-2]

    def lags(s):
        pad = np.zeros(s.shape[:-2] + (l_w, s.shape[-1]))
        sp = np.concatenate([pad, s], axis=-2)
        # lag j (1-based) of sample k sits at padded index l_w + k - j
        cols = [sp[..., l_w - j : l_w - j + K, :] for j in range(1, l_w + 1)]
        return np.concatenate(cols, axis=-1)

    return np.concatenate([lags(u_seq), lags(y_seq)], axis=-1)


@dataclass
class ArmaChannel:
    """Which error components feed a controller and which inputs it drives."""

    name: str
    y_cols: tuple
    u_cols: tuple


DECOUPLED = (
    ArmaChannel("position", y_cols=(0, 1), u_cols=(0,)),
    ArmaChannel("angle", y_cols=(2,), u_cols=(1,)),
)
POSITION_BOTH = (
    ArmaChannel("position", y_cols=(0, 1), u_cols=(0, 1)),
    ArmaChannel("angle", y_cols=(2,), u_cols=(1,)),
)
WIRINGS = {"decoupled": DECOUPLED, "position_both": POSITION_BOTH}


@dataclass
class TrainingDataset:
    """Sampled LBFSF rollouts: ``u_fb`` is ``(runs, K, 2)``, ``y_fb`` is ``(runs, K, 3)``."""

    u_fb: np.ndarray
    y_fb: np.ndarray
    T_s: float
    l_w: int
    seed: int | None = None
    initial_states: np.ndarray | None = None
    excluded: int = 0

    def __post_init__(self):
        self.u_fb = np.asarray(self.u_fb, dtype=float).reshape(-1, np.shape(self.u_fb)[-2], 2)
        self.y_fb = np.asarray(self.y_fb, dtype=float).reshape(-1, np.shape(self.y_fb)[-2], 3)
        if self.u_fb.shape[:2] != self.y_fb.shape[:2]:
            raise ValueError("u_fb and y_fb must share run and sample dimensions")

    @property
    def n_runs(self) -> int:
        return self.u_fb.shape[0]

    @property
    def n_samples(self) -> int:
        return self.u_fb.shape[1]

    def regressors(self, channel: ArmaChannel, u_hist=None):
        """``(runs, K, n_phi)`` regressors and ``(runs, K, n_u)`` targets for one controller."""
        target = self.u_fb[..., list(channel.u_cols)]
        u_hist = target if u_hist is None else u_hist
        phi = lagged_regressors(u_hist, self.y_fb[..., list(channel.y_cols)], self.l_w)
        return phi, target


@dataclass
class FitReport:
    rms: np.ndarray
    gradient_norm: float
    target_norm: float
    rows: int


def ridge_fit(Phi, Y, ridge: float = 1e-6, blocks=None):
    """Minimize ``|Y - Phi theta|^2 + ridge |theta|^2`` through the normal equations.

    ``Phi`` may be given as a sequence of row blocks; the Gram matrix is then
    accumulated block by block in order.
    """
    blocks = blocks if blocks is not None else [(Phi, Y)]
    n = blocks[0][0].shape[-1]
    G = np.zeros((n, n))
    b = np.zeros((n, blocks[0][1].shape[-1]))
    rows = 0
    for P, T in blocks:
        G += P.T @ P
        b += P.T @ T
        rows += P.shape[0]
    if rows < n:
        raise DegenerateData(f"{rows} rows for a regressor of length {n}")
    A = G + ridge * np.eye(n)
    scale = max(np.abs(np.diag(A)).max(), 1e-300)
    evals = np.linalg.eigvalsh(A / scale)
    if evals.min() <= 1e-15:
        raise DegenerateData(
            f"Gram matrix is rank deficient (min scaled eigenvalue {evals.min():.2e})"
        )
    # symmetric diagonal scaling, Cholesky, then refinement on the gradient
    d = 1.0 / np.sqrt(np.diag(A))
    As = A * d[:, None] * d[None, :]
    L = np.linalg.cholesky(As)

    def solve(rhs):
        return d[:, None] * np.linalg.solve(L.T, np.linalg.solve(L, d[:, None] * rhs))

    theta = solve(b)
    for _ in range(3):
        r = b - A @ theta
        theta = theta + solve(r)
    return theta, G, b, rows


def fit_controller(ds: TrainingDataset, channel: ArmaChannel, ridge: float = 1e-6,
                   include_warmup: bool = False, target=None, u_hist=None):
    phi, tgt = ds.regressors(channel, u_hist=u_hist)
    if target is not None:
        tgt = target
    start = 0 if include_warmup else ds.l_w
    phi = phi[:, start:]
    tgt = tgt[:, start:]
    blocks = [(phi[r], tgt[r]) for r in range(phi.shape[0])]
    if not blocks:
        raise DegenerateData("training dataset has no runs")
    theta, G, b, rows = ridge_fit(None, None, ridge, blocks=blocks)
    grad = 2.0 * ((G + ridge * np.eye(len(G))) @ theta - b)
    resid = np.concatenate([t - p @ theta for p, t in blocks])
    rep = FitReport(
        rms=np.sqrt(np.mean(resid**2, axis=0)),
        gradient_norm=float(np.linalg.norm(grad)),
        target_norm=float(np.linalg.norm(np.concatenate([t for _, t in blocks]))),
        rows=rows,
    )
    return ArmaController(ds.l_w, len(channel.y_cols), len(channel.u_cols), theta), rep


@dataclass
class ArmaModel:
    """The pair of controllers used in closed loop, plus their wiring."""

    controllers: list
    channels: tuple = DECOUPLED
    wiring: str = "decoupled"
    ridge: float = 1e-6
    reports: list = field(default_factory=list, repr=False)

    @property
    def l_w(self) -> int:
        return self.controllers[0].l_w

    def reset(self, batch: tuple = ()):
        for c in self.controllers:
            c.reset(batch)

    def step(self, y_fb):
        """Map ``y_fb = [e_r1, e_r2, e_psi]`` (batched) to ``[uT_fb, uR_fb]``."""
        y_fb = np.asarray(y_fb, dtype=float)
        u = np.zeros(y_fb.shape[:-1] + (2,))
        for c, ch in zip(self.controllers, self.channels):
            u[..., list(ch.u_cols)] += arma_step(c, y_fb[..., list(ch.y_cols)])
        return u

    @property
    def theta_pos(self):
        return self.controllers[0].theta

    @property
    def theta_ang(self):
        return self.controllers[1].theta


def fit_theta(ds: TrainingDataset, l_w: int | None = None, ridge: float = 1e-6,
              wiring: str = "decoupled", include_warmup: bool = False) -> ArmaModel:
    """Fit both controllers by ridge least squares on the LBFSF targets.

    ``model.theta_pos`` and ``model.theta_ang`` are the two coefficient
    matrices; ``model.reports`` holds the per-controller fit diagnostics.
    """
    if l_w is not None and l_w != ds.l_w:
        ds = TrainingDataset(ds.u_fb, ds.y_fb, ds.T_s, l_w, ds.seed, ds.initial_states, ds.excluded)
    if ds.n_runs == 0:
        raise DegenerateData("training dataset has no runs")
    channels = WIRINGS[wiring]
    pos, ang = channels
    c_pos, r_pos = fit_controller(ds, pos, ridge, include_warmup)
    if wiring == "decoupled":
        c_ang, r_ang = fit_controller(ds, ang, ridge, include_warmup)
    else:
        # the angle controller fits what the position controller leaves of the
        # torque target; its own history is that residual
        phi_pos, _ = ds.regressors(pos)
        col = pos.u_cols.index(ang.u_cols[0])
        pred = (phi_pos @ c_pos.theta)[..., [col]]
        resid = ds.u_fb[..., list(ang.u_cols)] - pred
        c_ang, r_ang = fit_controller(ds, ang, ridge, include_warmup, target=resid, u_hist=resid)
    return ArmaModel([c_pos, c_ang], channels, wiring, ridge, [r_pos, r_ang])


def feedback_output(x, x_star):
    """``y_fb = [r1 - r1*, r2 - r2*, psi - psi*]`` on unwrapped angles."""
    e = np.asarray(x, dtype=float) - np.asarray(x_star, dtype=float)
    return e[..., list(Y_INDEX)]


def generate_training_data(traj, sched, n_runs: int = 100, seed: int = 0,
                           ic_halfwidth: float = 0.5, T_s: float = 1e-3, horizon: float = 3.0,
                           l_w: int = 5, h: float = 1e-4, params=None,
                           blowup: float = 1e3) -> TrainingDataset:
    """Roll out the scheduled LBFSF loop from random initial states.

    Samples ``k = 0 .. horizon/T_s - 1`` of ``u_fb`` and ``y_fb`` are kept
    for every run; runs whose state leaves ``blowup`` are dropped and counted
    in ``excluded``.
    """
    from . import dynamics
    from .sim import SimScenario, sample_initial_states, simulate_batch

    x0s = sample_initial_states(n_runs, seed, ic_halfwidth)
    K = int(round(horizon / T_s))
    if n_runs == 0:
        return TrainingDataset(np.zeros((0, K, 2)), np.zeros((0, K, 3)), T_s, l_w, seed, x0s)
    s = SimScenario("lbfsf", traj, x0=x0s, sched=sched, T_s=T_s, h=h, horizon=horizon,
                    params=params or dynamics.DEFAULT_PARAMS, blowup=blowup, seed=seed)
    res = simulate_batch(s)
    keep = ~np.asarray(res.diverged)
    y = feedback_output(res.x, res.x_star[None])
    return TrainingDataset(res.u_fb[keep, :K], y[keep, :K], T_s, l_w, seed, x0s[keep],
                           excluded=int((~keep).sum()))
