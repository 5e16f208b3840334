"""Minimum-time direct transcription with explicit Euler defects.

Decision vector layout (length ``(N+1)*nx + (N+1)*nu + 1``)::

    z = [x_0, ..., x_N, u_0, ..., u_N, T]

Equality residual layout (length ``N*nx + nx + nx + nu``)::

    c = [d_0, ..., d_{N-1}, x_0 - x_i, x_N - x_f, u_N - u_f]
    d_k = x_{k+1} - x_k - (T/N) f(x_k, u_k)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .. import dynamics


class Model(Protocol):
    nx: int
    nu: int

    def f(self, X, U) -> np.ndarray: ...

    def jac(self, X, U) -> tuple[np.ndarray, np.ndarray]: ...

    def hess(self, X, U, M) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class BicopterModel:
    params: dynamics.PlantParams = dynamics.DEFAULT_PARAMS
    nx: int = dynamics.NX
    nu: int = dynamics.NU

    def f(self, X, U):
        return dynamics.deriv(X, U, self.params)

    def jac(self, X, U):
        return dynamics.jacobians(X, U, self.params)

    def hess(self, X, U, M):
        return dynamics.hessian_contract(X, U, M, self.params)


@dataclass(frozen=True)
class DoubleIntegratorModel:
    """``x = [position, velocity]``, ``u = [acceleration]``."""

    nx: int = 2
    nu: int = 1

    def f(self, X, U):
        X = np.asarray(X, dtype=float)
        return np.stack([X[..., 1], np.asarray(U, dtype=float)[..., 0]], axis=-1)

    def jac(self, X, U):
        batch = np.broadcast_shapes(np.shape(X)[:-1], np.shape(U)[:-1])
        A = np.zeros(batch + (2, 2))
        A[..., 0, 1] = 1.0
        B = np.zeros(batch + (2, 1))
        B[..., 1, 0] = 1.0
        return A, B

    def hess(self, X, U, M):
        batch = np.broadcast_shapes(np.shape(X)[:-1], np.shape(U)[:-1], np.shape(M)[:-1])
        return np.zeros(batch + (2, 2)), np.zeros(batch + (2, 1)), np.zeros(batch + (1, 1))


def _vec(a, n, name):
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()
    return a


@dataclass
class TrajOptProblem:
    x_i: np.ndarray
    x_f: np.ndarray
    u_f: np.ndarray
    N: int
    Q_x: np.ndarray
    Q_u: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    T_init: float = 10.0
    T_min: float = 0.1
    model: Model = field(default_factory=BicopterModel)

    def __post_init__(self):
        nx, nu = self.model.nx, self.model.nu
        for name in ("x_i", "x_f", "x_lo", "x_hi"):
            val = np.asarray(getattr(self, name), dtype=float)
            if val.ndim and val.shape != (nx,):
                raise ValueError(f"{name}: expected shape ({nx},), got {val.shape}")
            setattr(self, name, _vec(val, nx, name))
        for name in ("u_f", "u_lo", "u_hi"):
            val = np.asarray(getattr(self, name), dtype=float)
            if val.ndim and val.shape != (nu,):
                raise ValueError(f"{name}: expected shape ({nu},), got {val.shape}")
            setattr(self, name, _vec(val, nu, name))
        self.Q_x = np.atleast_2d(np.asarray(self.Q_x, dtype=float))
        self.Q_u = np.atleast_2d(np.asarray(self.Q_u, dtype=float))
        self.validate()

    def validate(self):
        nx, nu = self.model.nx, self.model.nu
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N: must be an integer >= 2, got {self.N}")
        self.N = int(self.N)
        if not self.T_min > 0:
            raise ValueError(f"T_min: must be positive, got {self.T_min}")
        if not self.T_init > self.T_min:
            raise ValueError(f"T_init: must exceed T_min={self.T_min}, got {self.T_init}")
        for name in ("x_i", "x_f", "u_f"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name}: entries must be finite")
        if np.any(self.x_lo > self.x_hi):
            raise ValueError("x_lo: exceeds x_hi in some component")
        if np.any(self.u_lo > self.u_hi):
            raise ValueError("u_lo: exceeds u_hi in some component")
        for name in ("x_i", "x_f"):
            v = getattr(self, name)
            if np.any(v < self.x_lo) or np.any(v > self.x_hi):
                raise ValueError(f"{name}: outside the state bounds")
        for name, Q, n in (("Q_x", self.Q_x, nx), ("Q_u", self.Q_u, nu)):
            if Q.shape != (n, n):
                raise ValueError(f"{name}: expected shape ({n}, {n}), got {Q.shape}")
            if not np.allclose(Q, Q.T):
                raise ValueError(f"{name}: must be symmetric")
            if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
                raise ValueError(f"{name}: must be positive semidefinite")


def flip_problem(N: int = 400, params: dynamics.PlantParams = dynamics.DEFAULT_PARAMS,
                 **overrides) -> TrajOptProblem:
    """Vertical 3 m climb with a full flip, hover to hover."""
    inf = np.inf
    kw = dict(
        x_i=np.zeros(6),
        x_f=np.array([0.0, 0.0, 3.0, 0.0, 2.0 * np.pi, 0.0]),
        u_f=np.array([params.g, 0.0]),
        N=N,
        Q_x=100.0 * np.eye(6),
        Q_u=100.0 * np.eye(2),
        x_lo=np.array([-1.0, -inf, 0.0, -inf, -inf, -inf]),
        x_hi=np.array([1.0, inf, 3.0, inf, inf, inf]),
        u_lo=np.array([1.0, -15.0]),
        u_hi=np.array([20.0, 15.0]),
        T_init=10.0,
        T_min=0.1,
        model=BicopterModel(params),
    )
    kw.update(overrides)
    return TrajOptProblem(**kw)


def double_integrator_problem(distance: float = 1.0, u_max: float = 1.0, N: int = 200,
                              **overrides) -> TrajOptProblem:
    """Rest-to-rest translation of a unit mass; optimum is ``2*sqrt(d/u_max)``."""
    inf = np.inf
    kw = dict(
        x_i=np.zeros(2),
        x_f=np.array([distance, 0.0]),
        u_f=np.zeros(1),
        N=N,
        Q_x=100.0 * np.eye(2),
        Q_u=100.0 * np.eye(1),
        x_lo=np.array([-inf, -inf]),
        x_hi=np.array([inf, inf]),
        u_lo=np.array([-u_max]),
        u_hi=np.array([u_max]),
        T_init=10.0,
        T_min=0.1,
        model=DoubleIntegratorModel(),
    )
    kw.update(overrides)
    return TrajOptProblem(**kw)


@dataclass(frozen=True)
class Layout:
    N: int
    nx: int
    nu: int

    @property
    def n_x(self):
        return (self.N + 1) * self.nx

    @property
    def n_u(self):
        return (self.N + 1) * self.nu

    @property
    def n(self):
        return self.n_x + self.n_u + 1

    @property
    def m(self):
        return self.N * self.nx + 2 * self.nx + self.nu

    def unpack(self, z):
        X = z[: self.n_x].reshape(self.N + 1, self.nx)
        U = z[self.n_x : self.n_x + self.n_u].reshape(self.N + 1, self.nu)
        return X, U, z[-1]

    def pack(self, X, U, T):
        return np.concatenate([np.ravel(X), np.ravel(U), [T]])

    # knot-major ordering [x_0, u_0, x_1, u_1, ..., x_N, u_N, T] used by the
    # banded Newton solves
    def to_knot_major(self, v):
        X, U, T = self.unpack(v)
        return np.concatenate([np.hstack([X, U]).ravel(), [T]])

    def from_knot_major(self, w):
        s = self.nx + self.nu
        W = w[:-1].reshape(self.N + 1, s)
        return self.pack(W[:, : self.nx], W[:, self.nx :], w[-1])


class NlpInstance:
    """Callables and structure of one transcribed problem."""

    def __init__(self, prob: TrajOptProblem):
        self.prob = prob
        self.model = prob.model
        self.layout = Layout(prob.N, prob.model.nx, prob.model.nu)
        N = prob.N
        L = self.layout
        X_lo = np.tile(prob.x_lo, (N + 1, 1))
        X_hi = np.tile(prob.x_hi, (N + 1, 1))
        U_lo = np.tile(prob.u_lo, (N + 1, 1))
        U_hi = np.tile(prob.u_hi, (N + 1, 1))
        # x_0 is pinned by its bounds as well as by its equality, so the
        # returned trajectory starts at x_i exactly
        X_lo[0] = X_hi[0] = prob.x_i
        self.lo = L.pack(X_lo, U_lo, prob.T_min)
        self.hi = L.pack(X_hi, U_hi, np.inf)

    @property
    def n(self):
        return self.layout.n

    @property
    def m(self):
        return self.layout.m

    def initial_guess(self):
        L = self.layout
        z = L.pack(np.zeros((L.N + 1, L.nx)), np.zeros((L.N + 1, L.nu)), self.prob.T_init)
        return np.clip(z, self.lo, self.hi)

    def objective(self, z):
        X, U, T = self.layout.unpack(z)
        ex = self.prob.x_f - X[-1]
        eu = self.prob.u_f - U[-1]
        return float(T + ex @ self.prob.Q_x @ ex + eu @ self.prob.Q_u @ eu)

    def objective_grad(self, z):
        L = self.layout
        X, U, T = L.unpack(z)
        g = np.zeros(L.n)
        gX, gU, _ = L.unpack(g)
        gX[-1] = -2.0 * self.prob.Q_x @ (self.prob.x_f - X[-1])
        gU[-1] = -2.0 * self.prob.Q_u @ (self.prob.u_f - U[-1])
        g[-1] = 1.0
        return g

    def defects(self, z):
        X, U, T = self.layout.unpack(z)
        F = self.model.f(X[:-1], U[:-1])
        return X[1:] - X[:-1] - (T / self.layout.N) * F

    def residual(self, z):
        X, U, T = self.layout.unpack(z)
        p = self.prob
        return np.concatenate(
            [self.defects(z).ravel(), X[0] - p.x_i, X[-1] - p.x_f, U[-1] - p.u_f]
        )

    def _jac_blocks(self, z):
        X, U, T = self.layout.unpack(z)
        A, B = self.model.jac(X[:-1], U[:-1])
        F = self.model.f(X[:-1], U[:-1])
        return X, U, T, A, B, F

    def jac_t_vec(self, z, mu, blocks=None):
        """``J(z)^T mu`` in decision-vector layout."""
        L = self.layout
        N, nx = L.N, L.nx
        X, U, T, A, B, F = blocks if blocks is not None else self._jac_blocks(z)
        tau = T / N
        M = mu[: N * nx].reshape(N, nx)
        m0 = mu[N * nx : N * nx + nx]
        mN = mu[N * nx + nx : N * nx + 2 * nx]
        mU = mu[N * nx + 2 * nx :]
        out = np.zeros(L.n)
        gX, gU, _ = L.unpack(out)
        gX[1:] += M
        gX[:-1] -= M + tau * np.einsum("kij,ki->kj", A, M)
        gU[:-1] -= tau * np.einsum("kij,ki->kj", B, M)
        gX[0] += m0
        gX[-1] += mN
        gU[-1] += mU
        out[-1] = -np.sum(F * M) / N
        return out

    def residual_jacobian(self, z):
        """Sparse ``m x n`` Jacobian of :meth:`residual`."""
        L = self.layout
        N, nx, nu = L.N, L.nx, L.nu
        X, U, T, A, B, F = self._jac_blocks(z)
        tau = T / N
        rows, cols, vals = [], [], []
        eye = np.eye(nx)
        for k in range(N):
            r = k * nx + np.arange(nx)
            xk = k * nx + np.arange(nx)
            uk = L.n_x + k * nu + np.arange(nu)
            for blk, cc in ((-eye - tau * A[k], xk), (eye, xk + nx), (-tau * B[k], uk)):
                rr, cc2 = np.meshgrid(r, cc, indexing="ij")
                rows.append(rr.ravel())
                cols.append(cc2.ravel())
                vals.append(blk.ravel())
            rows.append(r)
            cols.append(np.full(nx, L.n - 1))
            vals.append(-F[k] / N)
        base = N * nx
        for off, c0, cnt in ((base, 0, nx), (base + nx, N * nx, nx), (base + 2 * nx, L.n_x + N * nu, nu)):
            rows.append(off + np.arange(cnt))
            cols.append(c0 + np.arange(cnt))
            vals.append(np.ones(cnt))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(L.m, L.n),
        )


def transcribe(prob: TrajOptProblem) -> NlpInstance:
    prob.validate()
    return NlpInstance(prob)


def objective(z, prob: TrajOptProblem) -> float:
    return NlpInstance(prob).objective(np.asarray(z, dtype=float))
