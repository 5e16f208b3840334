from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .auglag import AugmentedLagrangian, SolverOptions
from .problem import NlpInstance, TrajOptProblem, transcribe


@dataclass
class OptimalTrajectory:
    """Knot states ``xs`` (N+1, nx) and inputs ``us`` (N+1, nu) at times ``k*dt``."""

    T_star: float
    xs: np.ndarray
    us: np.ndarray
    feasibility: float = 0.0
    objective: float = float("nan")
    outer_iterations: int = 0
    inner_iterations: int = 0
    penalty: float = float("nan")
    stationarity: float = float("nan")
    history: list = field(default_factory=list, repr=False)
    x_f: np.ndarray | None = None
    u_f: np.ndarray | None = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.us = np.asarray(self.us, dtype=float)
        if self.xs.ndim != 2 or self.us.ndim != 2 or len(self.xs) != len(self.us):
            raise ValueError("xs and us must be 2-D with one row per knot")
        if len(self.xs) < 3:
            raise ValueError("a trajectory needs at least 3 knots")
        if not self.T_star > 0:
            raise ValueError(f"T_star must be positive, got {self.T_star}")
        self.x_f = self.xs[-1].copy() if self.x_f is None else np.asarray(self.x_f, dtype=float)
        self.u_f = self.us[-1].copy() if self.u_f is None else np.asarray(self.u_f, dtype=float)

    @property
    def N(self) -> int:
        return len(self.xs) - 1

    @property
    def dt(self) -> float:
        return self.T_star / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def knot_index(self, t):
        """Zero-order-hold knot for time ``t``: ``min(floor(t/dt), N)``."""
        t = np.asarray(t, dtype=float)
        # relative slack so that t = k*dt lands on knot k despite rounding
        k = np.floor(t / self.dt * (1.0 + 1e-12) + 1e-9).astype(int)
        k = np.clip(k, 0, self.N)
        return np.where(t >= self.T_star, self.N, k)

    def reference_at(self, t):
        """``(x*, u*)`` under ZOH; held at ``(x_f, u_f)`` from ``T_star`` on."""
        k = self.knot_index(t)
        after = np.asarray(t) >= self.T_star
        xs = np.where(np.expand_dims(after, -1), self.x_f, self.xs[k])
        us = np.where(np.expand_dims(after, -1), self.u_f, self.us[k])
        return xs, us

    def decision_vector(self) -> np.ndarray:
        return np.concatenate([self.xs.ravel(), self.us.ravel(), [self.T_star]])

    @classmethod
    def from_decision_vector(cls, z, nlp: NlpInstance, **kw) -> "OptimalTrajectory":
        X, U, T = nlp.layout.unpack(np.asarray(z, dtype=float))
        return cls(T_star=float(T), xs=X.copy(), us=U.copy(), **kw)


@dataclass
class FeasibilityReport:
    max_defect: float
    defect_per_knot: np.ndarray = field(repr=False)
    max_bound_violation: float
    initial_error: float
    final_state_error: float
    final_input_error: float

    def worst(self) -> float:
        return max(self.max_defect, self.max_bound_violation, self.initial_error,
                   self.final_state_error, self.final_input_error)

    def ok(self, tol: float) -> bool:
        return self.worst() <= tol


def feasibility_report(traj: OptimalTrajectory, prob: TrajOptProblem) -> FeasibilityReport:
    """Recompute every residual of the transcription from the stored knots."""
    N = traj.N
    if N != prob.N:
        raise ValueError(f"trajectory has {N} intervals, problem expects {prob.N}")
    F = prob.model.f(traj.xs[:-1], traj.us[:-1])
    D = traj.xs[1:] - traj.xs[:-1] - traj.dt * F
    per_knot = np.abs(D).max(axis=1)
    bv = max(
        float(np.max(np.maximum(prob.x_lo - traj.xs, 0.0), initial=0.0)),
        float(np.max(np.maximum(traj.xs - prob.x_hi, 0.0), initial=0.0)),
        float(np.max(np.maximum(prob.u_lo - traj.us, 0.0), initial=0.0)),
        float(np.max(np.maximum(traj.us - prob.u_hi, 0.0), initial=0.0)),
        max(prob.T_min - traj.T_star, 0.0),
    )
    return FeasibilityReport(
        max_defect=float(per_knot.max()),
        defect_per_knot=per_knot,
        max_bound_violation=bv,
        initial_error=float(np.abs(traj.xs[0] - prob.x_i).max()),
        final_state_error=float(np.abs(traj.xs[-1] - prob.x_f).max()),
        final_input_error=float(np.abs(traj.us[-1] - prob.u_f).max()),
    )


def solve(prob: TrajOptProblem, opts: SolverOptions | None = None) -> OptimalTrajectory:
    """Solve the minimum-time problem from the default initial guess.

    Raises :class:`Infeasible` or :class:`Stalled` with the best iterate
    attached when no KKT point within tolerance is found.
    """
    opts = opts or SolverOptions()
    nlp = transcribe(prob)
    res = AugmentedLagrangian(nlp, opts).run()
    traj = OptimalTrajectory.from_decision_vector(
        res.z, nlp,
        objective=nlp.objective(res.z),
        x_f=prob.x_f,
        u_f=prob.u_f,
        outer_iterations=res.outer_iterations,
        inner_iterations=res.inner_iterations,
        penalty=res.rho,
        stationarity=res.stationarity,
        history=res.history,
    )
    traj.feasibility = feasibility_report(traj, prob).max_defect
    return traj
