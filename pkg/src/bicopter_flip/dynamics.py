"""Planar bicopter model with normalized actuation.

State ordering is ``[r1, v1, r2, v2, psi, omega]`` and input ordering is
``[uT, uR]`` everywhere in the package. All functions accept arrays with
arbitrary leading batch dimensions, so ``x`` may be ``(6,)`` or ``(B, 6)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NX = 6
NU = 2

STATE_NAMES = ("r1", "v1", "r2", "v2", "psi", "omega")
INPUT_NAMES = ("uT", "uR")

R1, V1, R2, V2, PSI, OMEGA = range(NX)
UT, UR = range(NU)


@dataclass(frozen=True)
class PlantParams:
    """Physical constants. Only ``g`` enters the normalized dynamics."""

    g: float = 9.81
    m: float = 1.0
    J: float = 1.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")

    def forces(self, u):
        """De-normalize ``[uT, uR]`` into total thrust (N) and torque (N m)."""
        u = np.asarray(u, dtype=float)
        return np.stack([self.m * u[..., UT], self.J * u[..., UR]], axis=-1)


DEFAULT_PARAMS = PlantParams()


def hover_input(p: PlantParams = DEFAULT_PARAMS) -> np.ndarray:
    return np.array([p.g, 0.0])


def deriv(x, u, p: PlantParams = DEFAULT_PARAMS) -> np.ndarray:
    """Continuous-time state derivative ``f(x, u)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    psi = x[..., PSI]
    ut = u[..., UT]
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (NX,)))
    out[..., R1] = x[..., V1]
    out[..., V1] = ut * np.sin(psi)
    out[..., R2] = x[..., V2]
    out[..., V2] = ut * np.cos(psi) - p.g
    out[..., PSI] = x[..., OMEGA]
    out[..., OMEGA] = u[..., UR]
    return out


def jacobians(x, u, p: PlantParams = DEFAULT_PARAMS):
    """Analytic ``A = df/dx`` and ``B = df/du``.

    Returns arrays of shape ``(..., 6, 6)`` and ``(..., 6, 2)``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    s = np.sin(x[..., PSI])
    c = np.cos(x[..., PSI])
    ut = u[..., UT]
    A = np.zeros(batch + (NX, NX))
    A[..., R1, V1] = 1.0
    A[..., R2, V2] = 1.0
    A[..., PSI, OMEGA] = 1.0
    A[..., V1, PSI] = ut * c
    A[..., V2, PSI] = -ut * s
    B = np.zeros(batch + (NX, NU))
    B[..., V1, UT] = s
    B[..., V2, UT] = c
    B[..., OMEGA, UR] = 1.0
    return A, B


def hessian_contract(x, u, mu, p: PlantParams = DEFAULT_PARAMS):
    """Second derivatives of ``mu . f(x, u)``.

    Returns ``(Hxx, Hxu, Huu)`` with shapes ``(..., 6, 6)``, ``(..., 6, 2)``
    and ``(..., 2, 2)``. Only the ``psi``/``uT`` entries are nonzero.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], mu.shape[:-1])
    s = np.sin(x[..., PSI])
    c = np.cos(x[..., PSI])
    ut = u[..., UT]
    m1 = mu[..., V1]
    m3 = mu[..., V2]
    Hxx = np.zeros(batch + (NX, NX))
    Hxu = np.zeros(batch + (NX, NU))
    Huu = np.zeros(batch + (NU, NU))
    Hxx[..., PSI, PSI] = -ut * (m1 * s + m3 * c)
    Hxu[..., PSI, UT] = m1 * c - m3 * s
    return Hxx, Hxu, Huu


def euler_step(x, u, dt, p: PlantParams = DEFAULT_PARAMS) -> np.ndarray:
    """Explicit Euler step, identical to the transcription defect map."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return np.asarray(x, dtype=float) + dt * deriv(x, u, p)


def rk4_step(x, u, dt, p: PlantParams = DEFAULT_PARAMS) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step with ``u`` held constant."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = deriv(x, u, p)
    k2 = deriv(x + 0.5 * dt * k1, u, p)
    k3 = deriv(x + 0.5 * dt * k2, u, p)
    k4 = deriv(x + dt * k3, u, p)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_hold(x, u, h, n, p: PlantParams = DEFAULT_PARAMS, *, trajectory=False):
    """Apply ``n`` RK4 steps of size ``h`` under one held input.

    Equivalent to calling :func:`rk4_step` ``n`` times, but vectorized over
    the substeps. The pitch subsystem is a double integrator, for which RK4
    is exact, so every stage angle is known in closed form; the velocity
    stage slopes then depend on the angle only and the translational
    states follow from cumulative sums.

    With ``trajectory=True`` the states after each substep are returned with
    shape ``(..., n, 6)``; otherwise only the final state.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    ut = u[..., UT, None]
    ur = u[..., UR, None]
    psi0 = x[..., PSI, None]
    om0 = x[..., OMEGA, None]
    j = np.arange(n, dtype=float)

    # angle and rate at the start of each substep
    tj = j * h
    psi_j = psi0 + om0 * tj + 0.5 * ur * tj * tj
    om_j = om0 + ur * tj
    # RK4 stage angles: psi + h/2*om, psi + h/2*(om + h/2*ur), psi + h*(om + h/2*ur)
    a2 = psi_j + 0.5 * h * om_j
    a3 = a2 + 0.25 * h * h * ur
    a4 = psi_j + h * om_j + 0.5 * h * h * ur

    s1, s2, s3, s4 = np.sin(psi_j), np.sin(a2), np.sin(a3), np.sin(a4)
    c1, c2, c3, c4 = np.cos(psi_j), np.cos(a2), np.cos(a3), np.cos(a4)
    g = p.g
    # velocity increments per substep
    dv1 = (h / 6.0) * ut * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
    dv2 = (h / 6.0) * (ut * (c1 + 2.0 * c2 + 2.0 * c3 + c4) - 6.0 * g)
    # position increments: h*v + h^2/6*(a1 + a2 + a3)
    q1 = (h * h / 6.0) * ut * (s1 + s2 + s3)
    q2 = (h * h / 6.0) * (ut * (c1 + c2 + c3) - 3.0 * g)

    v1_start = x[..., V1, None] + np.concatenate(
        [np.zeros_like(dv1[..., :1]), np.cumsum(dv1, axis=-1)[..., :-1]], axis=-1
    )
    v2_start = x[..., V2, None] + np.concatenate(
        [np.zeros_like(dv2[..., :1]), np.cumsum(dv2, axis=-1)[..., :-1]], axis=-1
    )
    dr1 = h * v1_start + q1
    dr2 = h * v2_start + q2

    if not trajectory:
        out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (NX,)))
        out[..., R1] = x[..., R1] + dr1.sum(axis=-1)
        out[..., V1] = x[..., V1] + dv1.sum(axis=-1)
        out[..., R2] = x[..., R2] + dr2.sum(axis=-1)
        out[..., V2] = x[..., V2] + dv2.sum(axis=-1)
        tn = n * h
        out[..., PSI] = x[..., PSI] + x[..., OMEGA] * tn + 0.5 * u[..., UR] * tn * tn
        out[..., OMEGA] = x[..., OMEGA] + u[..., UR] * tn
        return out

    tn = (j + 1.0) * h
    traj = np.empty(psi_j.shape + (NX,))
    traj[..., R1] = x[..., R1, None] + np.cumsum(dr1, axis=-1)
    traj[..., V1] = x[..., V1, None] + np.cumsum(dv1, axis=-1)
    traj[..., R2] = x[..., R2, None] + np.cumsum(dr2, axis=-1)
    traj[..., V2] = x[..., V2, None] + np.cumsum(dv2, axis=-1)
    traj[..., PSI] = psi0 + om0 * tn + 0.5 * ur * tn * tn
    traj[..., OMEGA] = om0 + ur * tn
    return traj
