"""Augmented-Lagrangian solver for transcribed minimum-time problems.

Equalities ``c(z) = 0`` go into the augmented Lagrangian

    L_A(z; lam, rho) = f(z) + lam . c(z) + rho/2 |c(z)|^2

and the bounds ``lo <= z <= hi`` are handled by projection inside the inner
solver. Two inner solvers are available:

``"newton"``
    Projected Newton (Bertsekas' two-metric method). The Hessian of ``L_A`` is
    banded in knot-major ordering apart from the final-time row and column,
    so each step costs one banded Cholesky plus a Schur complement.
``"lbfgs"``
    Projected limited-memory BFGS with Armijo backtracking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .problem import NlpInstance

log = logging.getLogger(__name__)


class SolveError(RuntimeError):
    """Base class for solver failures; ``best`` holds the best iterate."""

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class Infeasible(SolveError):
    pass


class Stalled(SolveError):
    pass


@dataclass
class SolverOptions:
    eq_tol: float = 1e-6
    stat_tol: float = 1e-4
    max_outer: int = 50
    max_inner: int = 500
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e12
    required_decrease: float = 4.0
    inner: str = "newton"
    lbfgs_memory: int = 20
    armijo: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.inner not in ("newton", "lbfgs"):
            raise ValueError(f"inner: unknown inner solver {self.inner!r}")
        for name in ("eq_tol", "stat_tol", "rho0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("max_outer/max_inner: must be >= 1")


@dataclass
class OuterRecord:
    outer: int
    rho: float
    violation: float
    stationarity: float
    inner_iterations: int
    accepted: bool
    objective: float


@dataclass
class SolveResult:
    z: np.ndarray
    lam: np.ndarray
    rho: float
    violation: float
    stationarity: float
    outer_iterations: int
    inner_iterations: int
    history: list = field(default_factory=list)


class _ALFunction:
    """Value, gradient and structured Hessian of the augmented Lagrangian."""

    def __init__(self, nlp: NlpInstance):
        self.nlp = nlp
        L = nlp.layout
        self.N, self.nx, self.nu = L.N, L.nx, L.nu
        self.s = L.nx + L.nu
        self.nb = (L.N + 1) * self.s
        self.bw = self.s + self.nx - 1
        self._build_band_index()

    def _build_band_index(self):
        # flat indices into the lower band storage for the lower triangle of a
        # p x p block placed at a given diagonal offset
        p = self.s + self.nx
        a, b = np.tril_indices(p)
        off = self.s * np.arange(self.N)[:, None]
        self._def_flat = ((a - b)[None, :] * self.nb + off + b[None, :]).ravel()
        self._def_ab = (a, b)
        q = self.s
        a2, b2 = np.tril_indices(q)
        self._term_flat = (a2 - b2) * self.nb + self.s * self.N + b2
        self._term_ab = (a2, b2)

    def value_grad(self, z, lam, rho):
        nlp = self.nlp
        blocks = nlp._jac_blocks(z)
        c = nlp.residual(z)
        mu = lam + rho * c
        val = nlp.objective(z) + lam @ c + 0.5 * rho * (c @ c)
        g = nlp.objective_grad(z) + nlp.jac_t_vec(z, mu, blocks)
        return val, g

    def value(self, z, lam, rho):
        c = self.nlp.residual(z)
        return self.nlp.objective(z) + lam @ c + 0.5 * rho * (c @ c)

    def hessian(self, z, lam, rho):
        """Return ``(ab, h, hTT)``: lower band of the knot block, T column, T-T entry."""
        nlp = self.nlp
        N, nx, nu, s = self.N, self.nx, self.nu, self.s
        X, U, T, A, B, F = nlp._jac_blocks(z)
        tau = T / N
        c = nlp.residual(z)
        mu = lam + rho * c
        M = mu[: N * nx].reshape(N, nx)

        p = s + nx
        Jl = np.zeros((N, nx, p))
        Jl[:, :, :nx] = -np.eye(nx) - tau * A
        Jl[:, :, nx:s] = -tau * B
        Jl[:, :, s:] = np.eye(nx)
        Hk = rho * np.einsum("kia,kib->kab", Jl, Jl)
        Hxx, Hxu, Huu = nlp.model.hess(X[:-1], U[:-1], M)
        Hk[:, :nx, :nx] -= tau * Hxx
        Hk[:, :nx, nx:s] -= tau * Hxu
        Hk[:, nx:s, :nx] -= tau * np.swapaxes(Hxu, 1, 2)
        Hk[:, nx:s, nx:s] -= tau * Huu

        a, b = self._def_ab
        ab = np.bincount(self._def_flat, weights=Hk[:, a, b].ravel(),
                         minlength=(self.bw + 1) * self.nb)
        # terminal block: objective curvature and x_N, u_N equalities
        term = np.zeros((s, s))
        term[:nx, :nx] = 2.0 * nlp.prob.Q_x + rho * np.eye(nx)
        term[nx:, nx:] = 2.0 * nlp.prob.Q_u + rho * np.eye(nu)
        a2, b2 = self._term_ab
        ab += np.bincount(self._term_flat, weights=term[a2, b2],
                          minlength=(self.bw + 1) * self.nb)
        ab = ab.reshape(self.bw + 1, self.nb)
        ab[0, :nx] += rho  # x_0 equality

        jT = -F / N
        hloc = rho * np.einsum("kia,ki->ka", Jl, jT)
        hloc[:, :nx] -= np.einsum("kij,ki->kj", A, M) / N
        hloc[:, nx:s] -= np.einsum("kij,ki->kj", B, M) / N
        h = np.zeros(self.nb)
        view = h[: N * s].reshape(N, s)
        view += hloc[:, :s]
        h[s : s + N * s].reshape(N, s)[:, :nx] += hloc[:, s:]
        hTT = rho * float(np.sum(jT * jT))
        return ab, h, hTT


def _proj_grad(z, g, lo, hi):
    return np.clip(z - g, lo, hi) - z


def _solve_arrow(ab, h, hTT, rhs_b, rhs_T, free_b, free_T, shift):
    """Solve the masked, shifted banded-arrow Newton system. Raises LinAlgError if not PD."""
    ab = ab.copy()
    nb = ab.shape[1]
    ab[0] += shift
    if not free_b.all():
        bw = ab.shape[0] - 1
        fixed = ~free_b
        ab[:, fixed] = 0.0
        for d in range(1, bw + 1):
            ab[d, : nb - d][fixed[d:]] = 0.0
        ab[0, fixed] = 1.0
        h = np.where(free_b, h, 0.0)
        rhs_b = np.where(free_b, rhs_b, 0.0)
    cb = sla.cholesky_banded(ab, lower=True, check_finite=False)
    w = sla.cho_solve_banded((cb, True), rhs_b, check_finite=False)
    if not free_T:
        return w, 0.0
    y = sla.cho_solve_banded((cb, True), h, check_finite=False)
    schur = hTT + shift - h @ y
    if not schur > 1e-14 * max(1.0, abs(hTT)):
        raise np.linalg.LinAlgError("Schur complement not positive")
    dT = (rhs_T - h @ w) / schur
    return w - y * dT, dT


class AugmentedLagrangian:
    def __init__(self, nlp: NlpInstance, opts: SolverOptions | None = None):
        self.nlp = nlp
        self.opts = opts or SolverOptions()
        self.fun = _ALFunction(nlp)
        self.lo = nlp.lo
        self.hi = nlp.hi
        self._shift = 0.0

    # ------------------------------------------------------------------ inner
    def _line_search(self, z, val, g, d, lam, rho):
        lo, hi = self.lo, self.hi
        alpha = 1.0
        for _ in range(60):
            z_new = np.clip(z + alpha * d, lo, hi)
            step = z_new - z
            slope = g @ step
            if slope >= 0:
                alpha *= 0.5
                continue
            v_new = self.fun.value(z_new, lam, rho)
            if v_new <= val + self.opts.armijo * slope:
                return z_new, v_new
            alpha *= 0.5
        return None, None

    def _newton_direction(self, z, g, pg_norm, lam, rho):
        L = self.nlp.layout
        eps = min(1e-3, pg_norm)
        lo, hi = self.lo, self.hi
        active = ((z <= lo + eps) & (g > 0)) | ((z >= hi - eps) & (g < 0))
        ab, h, hTT = self.fun.hessian(z, lam, rho)
        g_w = L.to_knot_major(g)
        act_w = L.to_knot_major(active.astype(float)) > 0.5
        free_b = ~act_w[:-1]
        free_T = not act_w[-1]
        diag = np.abs(ab[0]).max() if ab.size else 1.0
        shift = self._shift
        while True:
            try:
                d_b, d_T = _solve_arrow(ab, h, hTT, -g_w[:-1], -g_w[-1], free_b, free_T, shift)
                break
            except np.linalg.LinAlgError:
                shift = max(4.0 * shift, 1e-10 * max(diag, 1.0))
                if shift > 1e12 * max(diag, 1.0):
                    raise
        self._shift = shift / 4.0 if shift > 1e-10 * max(diag, 1.0) else 0.0
        d_w = np.concatenate([d_b, [d_T]])
        # scaled gradient step on the active set; projection keeps it on the bound
        dg = np.concatenate([ab[0], [hTT]])
        scale = np.where(np.abs(dg) > 0, np.abs(dg), 1.0)
        d_w = np.where(act_w, -g_w / scale, d_w)
        return L.from_knot_major(d_w)

    def _inner_newton(self, z, lam, rho, omega):
        it = 0
        val, g = self.fun.value_grad(z, lam, rho)
        pg = np.abs(_proj_grad(z, g, self.lo, self.hi)).max()
        stalled = False
        while pg > omega and it < self.opts.max_inner:
            d = self._newton_direction(z, g, pg, lam, rho)
            z_new, _ = self._line_search(z, val, g, d, lam, rho)
            if z_new is None:
                # fall back to a projected steepest-descent step
                z_new, _ = self._line_search(z, val, g, -g, lam, rho)
                if z_new is None:
                    stalled = True
                    break
            z = z_new
            val, g = self.fun.value_grad(z, lam, rho)
            pg = np.abs(_proj_grad(z, g, self.lo, self.hi)).max()
            it += 1
        return z, pg, it, stalled

    def _inner_lbfgs(self, z, lam, rho, omega):
        lo, hi = self.lo, self.hi
        mem = self.opts.lbfgs_memory
        S, Y = [], []
        val, g = self.fun.value_grad(z, lam, rho)
        pg = np.abs(_proj_grad(z, g, lo, hi)).max()
        it = 0
        stalled = False
        while pg > omega and it < self.opts.max_inner:
            eps = min(1e-3, pg)
            free = ~(((z <= lo + eps) & (g > 0)) | ((z >= hi - eps) & (g < 0)))
            q = np.where(free, g, 0.0)
            alphas = []
            for s_, y_ in zip(reversed(S), reversed(Y)):
                r = 1.0 / (y_ @ s_)
                a = r * (s_ @ q)
                alphas.append((a, r))
                q = q - a * y_
            if S:
                q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
            else:
                q /= max(1.0, np.abs(g).max())
            for (a, r), s_, y_ in zip(reversed(alphas), S, Y):
                b = r * (y_ @ q)
                q = q + s_ * (a - b)
            d = np.where(free, -q, -g)
            z_new, _ = self._line_search(z, val, g, d, lam, rho)
            if z_new is None:
                S.clear()
                Y.clear()
                z_new, _ = self._line_search(z, val, g, -g / max(1.0, np.abs(g).max()), lam, rho)
                if z_new is None:
                    stalled = True
                    break
            val_new, g_new = self.fun.value_grad(z_new, lam, rho)
            s_, y_ = z_new - z, g_new - g
            sy = s_ @ y_
            if sy > 1e-12 * (y_ @ y_):
                S.append(s_)
                Y.append(y_)
                if len(S) > mem:
                    S.pop(0)
                    Y.pop(0)
            z, val, g = z_new, val_new, g_new
            pg = np.abs(_proj_grad(z, g, lo, hi)).max()
            it += 1
        return z, pg, it, stalled

    # ------------------------------------------------------------------ outer
    def run(self, z0=None) -> SolveResult:
        o = self.opts
        nlp = self.nlp
        z = nlp.initial_guess() if z0 is None else np.clip(np.asarray(z0, float), self.lo, self.hi)
        lam = np.zeros(nlp.m)
        rho = o.rho0
        inner = self._inner_newton if o.inner == "newton" else self._inner_lbfgs
        viol_acc = np.abs(nlp.residual(z)).max()
        history = []
        total_inner = 0
        best = z
        for outer in range(1, o.max_outer + 1):
            z_new, pg, it, stalled = inner(z, lam, rho, o.stat_tol)
            total_inner += it
            c = nlp.residual(z_new)
            viol = float(np.abs(c).max())
            accepted = viol <= viol_acc
            history.append(OuterRecord(outer, rho, viol, pg, it, accepted, nlp.objective(z_new)))
            log.info("outer %d rho=%.1e viol=%.3e stat=%.3e inner=%d%s", outer, rho, viol, pg,
                     it, "" if accepted else " (rejected)")
            if stalled and it == 0 and not accepted:
                raise Stalled(f"inner solver made no progress at outer iteration {outer}",
                              best=best, history=history)
            if accepted:
                decreased = viol <= viol_acc / o.required_decrease
                z = best = z_new
                lam = lam + rho * c
                if viol <= o.eq_tol and pg <= o.stat_tol:
                    return SolveResult(z, lam, rho, viol, pg, outer, total_inner, history)
                if not decreased:
                    rho *= o.rho_growth
                viol_acc = viol
            else:
                rho *= o.rho_growth
            if rho > o.rho_max:
                break
        last = history[-1]
        raise Infeasible(
            f"no KKT point after {len(history)} outer iterations: violation "
            f"{viol_acc:.3e} (tol {o.eq_tol:.1e}), stationarity {last.stationarity:.3e} "
            f"(tol {o.stat_tol:.1e})",
            best=best, history=history,
        )
