"""Continuous-time LQR along the optimal trajectory.

Gains follow the positive convention ``u_fb = K (x* - x)``, so every closed
loop is ``A - B K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import dynamics
from .trajopt import OptimalTrajectory


class CareError(RuntimeError):
    pass


class NotStabilizable(CareError):
    pass


class IllConditioned(CareError):
    pass


@dataclass(frozen=True)
class LqrWeights:
    R1: np.ndarray = field(default_factory=lambda: np.eye(dynamics.NX))
    R2: np.ndarray = field(default_factory=lambda: np.eye(dynamics.NU))

    def __post_init__(self):
        R1 = np.atleast_2d(np.asarray(self.R1, dtype=float))
        R2 = np.atleast_2d(np.asarray(self.R2, dtype=float))
        object.__setattr__(self, "R1", R1)
        object.__setattr__(self, "R2", R2)
        if not np.allclose(R1, R1.T) or np.linalg.eigvalsh(R1).min() < -1e-12:
            raise ValueError("R1 must be symmetric positive semidefinite")
        if not np.allclose(R2, R2.T) or np.linalg.eigvalsh(R2).min() <= 0:
            raise ValueError("R2 must be symmetric positive definite")


def care_residual(A, B, Q, R, P) -> float:
    """Relative residual ``|A'P + PA - PBR^-1B'P + Q|_F / max(1, |P|_F)``."""
    Res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    return float(np.linalg.norm(Res) / max(1.0, np.linalg.norm(P)))


def solve_lyapunov(A, C):
    """Solve ``A' X + X A + C = 0`` by vectorization (small dense ``A``)."""
    n = A.shape[0]
    I = np.eye(n)
    # vec(A'X + XA) = (I kron A' + A' kron I) vec(X), column-major vec
    M = np.kron(I, A.T) + np.kron(A.T, I)
    X = np.linalg.solve(M, -C.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def solve_care(A, B, Q, R, tol: float = 1e-8, max_refine: int = 3):
    """Stabilizing solution of the continuous algebraic Riccati equation.

    The stable invariant subspace of the Hamiltonian gives a first solution,
    which Kleinman-Newton steps then refine until the relative residual is
    below ``tol``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    scale = max(1.0, np.abs(H).max())
    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    eig = np.linalg.eigvals(H)
    n_stable = int(np.sum(eig.real < -1e-10 * scale))
    if sdim != n or n_stable != n:
        raise NotStabilizable(
            f"Hamiltonian has {n_stable} stable eigenvalues, expected {n}"
        )
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise NotStabilizable("stable subspace is not a graph over the state space")
    P = np.linalg.solve(U1.T, U2.T).T
    P = 0.5 * (P + P.T)

    res = care_residual(A, B, Q, R, P)
    for _ in range(max_refine):
        if res <= tol * 1e-2:
            break
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        if np.linalg.eigvals(Acl).real.max() >= 0:
            break
        P_new = solve_lyapunov(Acl, Q + K.T @ R @ K)
        res_new = care_residual(A, B, Q, R, P_new)
        if res_new >= res:
            break
        P, res = P_new, res_new
    if res > tol:
        raise IllConditioned(f"Riccati residual {res:.2e} above tolerance {tol:.1e}")
    return P


def lqr_gain(A, B, w: LqrWeights | None = None, Q=None, R=None):
    """``K = R^-1 B' P`` for the weights in ``w`` (or explicit ``Q``, ``R``)."""
    if w is not None:
        Q, R = w.R1, w.R2
    P = solve_care(A, B, Q, R)
    B = np.asarray(B, dtype=float).reshape(P.shape[0], -1)
    return np.linalg.solve(np.atleast_2d(R), B.T @ P)


def spectral_abscissa(A, B, K) -> float:
    return float(np.linalg.eigvals(A - B @ K).real.max())


@dataclass
class GainSchedule:
    """Per-knot linearizations and gains, or a single hover gain."""

    times: np.ndarray
    A: np.ndarray | None
    B: np.ndarray | None
    K: np.ndarray
    hover: bool = False
    weights: LqrWeights = field(default_factory=LqrWeights)

    def __len__(self):
        return len(self.K)

    def gain(self, k):
        if self.hover:
            return self.K[0]
        return self.K[np.clip(k, 0, len(self.K) - 1)]

    def closed_loop_abscissa(self) -> np.ndarray:
        if self.A is None or self.B is None:
            raise ValueError("schedule carries no linearizations (loaded from file?)")
        return np.array([spectral_abscissa(a, b, k) for a, b, k in zip(self.A, self.B, self.K)])


def linearize_schedule(traj: OptimalTrajectory, w: LqrWeights | None = None,
                       p: dynamics.PlantParams = dynamics.DEFAULT_PARAMS) -> GainSchedule:
    w = w or LqrWeights()
    A, B = dynamics.jacobians(traj.xs, traj.us, p)
    K = np.empty((len(A), dynamics.NU, dynamics.NX))
    for k in range(len(A)):
        try:
            K[k] = lqr_gain(A[k], B[k], w)
        except CareError as e:
            raise type(e)(f"knot {k}: {e}") from e
        if spectral_abscissa(A[k], B[k], K[k]) >= 0:
            raise NotStabilizable(f"knot {k}: closed loop is not Hurwitz")
    return GainSchedule(traj.times, A, B, K, hover=False, weights=w)


def hover_gain(p: dynamics.PlantParams = dynamics.DEFAULT_PARAMS, w: LqrWeights | None = None,
               r1: float = 0.0, r2: float = 0.0) -> GainSchedule:
    """Single gain linearized at hover (any position; dynamics are translation invariant)."""
    w = w or LqrWeights()
    x_h = np.array([r1, 0.0, r2, 0.0, 0.0, 0.0])
    A, B = dynamics.jacobians(x_h, dynamics.hover_input(p), p)
    K = lqr_gain(A, B, w)
    return GainSchedule(np.zeros(1), A[None], B[None], K[None], hover=True, weights=w)


def lbfsf_control(t, x, traj: OptimalTrajectory, sched: GainSchedule):
    """Feedback component ``u_fb = K_k (x*(t) - x)``; ``x`` may be batched ``(..., 6)``."""
    k = traj.knot_index(t)
    x_star, _ = traj.reference_at(t)
    K = sched.gain(k)
    return np.einsum("ij,...j->...i", K, x_star - np.asarray(x, dtype=float))
