import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicopter_flip import dynamics, trajopt
from bicopter_flip.trajopt import (
    Infeasible, OptimalTrajectory, SolverOptions, TrajOptProblem, double_integrator_problem,
    feasibility_report, flip_problem, objective, solve, transcribe,
)

G = 9.81


def hover_problem(N=2, **kw):
    return flip_problem(N=N, x_f=np.zeros(6), **kw)


def test_dimensions_for_two_knots():
    nlp = transcribe(hover_problem(N=2))
    assert nlp.n == 25
    assert nlp.m == 26
    assert len(nlp.residual(nlp.initial_guess())) == 26


@pytest.mark.parametrize("T", [0.3, 1.0, 7.5])
def test_hover_hold_residual_is_zero(T):
    prob = hover_problem(N=5)
    nlp = transcribe(prob)
    z = nlp.layout.pack(np.zeros((6, 6)), np.tile([G, 0.0], (6, 1)), T)
    assert np.all(nlp.residual(z) == 0)
    assert objective(z, prob) == T


def test_layout_round_trip():
    L = transcribe(hover_problem(N=4)).layout
    z = np.arange(L.n, dtype=float)
    X, U, T = L.unpack(z)
    np.testing.assert_array_equal(L.pack(X, U, T), z)
    np.testing.assert_array_equal(L.from_knot_major(L.to_knot_major(z)), z)
    assert T == z[-1]


def test_residual_jacobian_banded_structure():
    N = 6
    nlp = transcribe(flip_problem(N=N))
    rng = np.random.default_rng(0)
    z = rng.normal(size=nlp.n)
    z[-1] = 1.3
    L = nlp.layout
    eps = 1e-7
    J = np.zeros((nlp.m, nlp.n))
    for j in range(nlp.n):
        d = np.zeros(nlp.n)
        d[j] = eps
        J[:, j] = (nlp.residual(z + d) - nlp.residual(z - d)) / (2 * eps)
    for k in range(N):
        rows = slice(6 * k, 6 * k + 6)
        allowed = np.zeros(nlp.n, dtype=bool)
        allowed[6 * k : 6 * k + 12] = True
        allowed[L.n_x + 2 * k : L.n_x + 2 * k + 2] = True
        allowed[-1] = True
        assert np.abs(J[rows][:, ~allowed]).max() == 0
    # the analytic sparse Jacobian agrees with the probe
    np.testing.assert_allclose(nlp.residual_jacobian(z).toarray(), J, atol=1e-6)


def _terminal_offset(e, i):
    prob = hover_problem(N=3)
    nlp = transcribe(prob)
    X = np.zeros((4, 6))
    X[-1, i] = e
    return prob, nlp.layout.pack(X, np.tile([G, 0.0], (4, 1)), 1.5)


def test_objective_examples():
    prob, z = _terminal_offset(0.0, 0)
    assert objective(z, prob) == 1.5
    prob, z = _terminal_offset(0.2, 3)
    assert np.isclose(objective(z, prob), 1.5 + 100 * 0.04)


def test_objective_gradient_matches_finite_differences():
    prob = flip_problem(N=5)
    nlp = transcribe(prob)
    z = np.random.default_rng(42).normal(size=nlp.n)
    g = nlp.objective_grad(z)
    eps = 1e-6
    fd = np.array([(nlp.objective(z + eps * e) - nlp.objective(z - eps * e)) / (2 * eps)
                   for e in np.eye(nlp.n)])
    assert np.abs(g - fd).max() <= 1e-6 * max(1, np.abs(g).max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), mu_scale=st.floats(0.1, 10))
def test_jacobian_transpose_product(seed, mu_scale):
    nlp = transcribe(flip_problem(N=4))
    rng = np.random.default_rng(seed)
    z = rng.normal(size=nlp.n)
    mu = mu_scale * rng.normal(size=nlp.m)
    np.testing.assert_allclose(nlp.jac_t_vec(z, mu), nlp.residual_jacobian(z).T @ mu,
                               rtol=1e-12, atol=1e-12)


def test_initial_guess_clipped_into_bounds():
    nlp = transcribe(flip_problem(N=10))
    z = nlp.initial_guess()
    X, U, T = nlp.layout.unpack(z)
    assert T == 10.0
    assert np.all(U[:, 0] == 1.0) and np.all(U[:, 1] == 0.0)
    assert np.all(z >= nlp.lo) and np.all(z <= nlp.hi)


@pytest.mark.parametrize(
    "field, value",
    [
        ("N", 1),
        ("T_init", 0.05),
        ("T_min", 0.0),
        ("Q_x", -np.eye(6)),
        ("u_lo", np.array([30.0, -15])),
        ("x_f", np.array([0, 0, 5.0, 0, 0, 0])),
    ],
)
def test_invalid_problem_names_field(field, value):
    with pytest.raises(ValueError, match=field):
        dataclasses.replace(flip_problem(N=10), **{field: value}).validate()


def test_double_integrator_bang_bang():
    prob = double_integrator_problem(distance=1.0, u_max=1.0, N=200)
    traj = solve(prob)
    assert abs(traj.T_star - 2.0) <= 0.05
    u = traj.us[:-1, 0]
    off = np.abs(np.abs(u) - 1.0) > 0.05
    idx = np.flatnonzero(off)
    assert idx.size == 0 or idx.max() - idx.min() + 1 <= 5
    # accelerate then brake
    assert u[0] > 0.95 and u[-1] < -0.95
    assert feasibility_report(traj, prob).ok(1e-6)


def test_hover_hold_solves_to_minimum_time():
    traj = solve(flip_problem(N=20, x_f=np.zeros(6)))
    assert np.isclose(traj.T_star, 0.1, atol=1e-6)


def test_flip_solution_invariants(flip_traj, flip_problem):
    rep = feasibility_report(flip_traj, flip_problem)
    assert rep.ok(1e-6)
    assert np.all(flip_traj.xs[0] == flip_problem.x_i)
    assert flip_traj.dt * flip_traj.N == pytest.approx(flip_traj.T_star, rel=1e-15)
    assert flip_traj.stationarity <= 1e-4
    # objective equals T at feasibility
    assert abs(flip_traj.objective - flip_traj.T_star) <= 1e-6
    # pitch goes through a full turn
    assert np.isclose(flip_traj.xs[-1, 4], 2 * np.pi, atol=1e-6)


def test_monotone_outer_history(flip_traj):
    acc = [r.violation for r in flip_traj.history if r.accepted]
    assert len(acc) >= 2
    assert all(b <= a for a, b in zip(acc, acc[1:]))


def test_forward_rollout_reproduces_knots(flip_traj):
    x = flip_traj.xs[0]
    worst = 0.0
    for k in range(flip_traj.N):
        x = dynamics.euler_step(x, flip_traj.us[k], flip_traj.dt)
        worst = max(worst, np.abs(x - flip_traj.xs[k + 1]).max())
    assert worst <= flip_traj.N * 1e-6


def test_corrupted_knot_detected(flip_traj, flip_problem):
    bad = dataclasses.replace(flip_traj, xs=flip_traj.xs.copy())
    bad.xs[200, 0] += 0.1
    rep = feasibility_report(bad, flip_problem)
    assert rep.defect_per_knot[199] >= 0.05
    assert rep.defect_per_knot[200] >= 0.05
    assert not rep.ok(1e-6)


def test_solve_is_deterministic():
    prob = double_integrator_problem(N=100)
    a, b = solve(prob), solve(prob)
    assert a.T_star == b.T_star
    np.testing.assert_array_equal(a.xs, b.xs)
    np.testing.assert_array_equal(a.us, b.us)


@pytest.mark.parametrize("N", [10, 20])
def test_lbfgs_inner_solver_small_problem(N):
    prob = double_integrator_problem(N=N)
    traj = solve(prob, SolverOptions(inner="lbfgs", max_inner=5000))
    assert feasibility_report(traj, prob).ok(1e-6)
    assert abs(traj.T_star - 2.0) <= 0.1


def test_unreachable_target_reports_infeasible():
    # one outer iteration of three inner steps cannot reach eq_tol
    prob = double_integrator_problem(distance=1.0, N=50)
    with pytest.raises(Infeasible) as info:
        solve(prob, SolverOptions(max_outer=1, max_inner=3))
    assert info.value.best is not None


def test_reference_hold_and_floor(flip_traj):
    dt = flip_traj.dt
    x, u = flip_traj.reference_at(1.5 * dt)
    np.testing.assert_array_equal(x, flip_traj.xs[1])
    np.testing.assert_array_equal(u, flip_traj.us[1])
    x, u = flip_traj.reference_at(0.0)
    np.testing.assert_array_equal(x, flip_traj.xs[0])
    x, u = flip_traj.reference_at(flip_traj.T_star + 0.3)
    np.testing.assert_array_equal(x, [0, 0, 3, 0, 2 * np.pi, 0])
    np.testing.assert_array_equal(u, [G, 0])
    assert flip_traj.knot_index(2 * dt) == 2


def test_trajectory_validation():
    with pytest.raises(ValueError):
        OptimalTrajectory(T_star=-1.0, xs=np.zeros((3, 6)), us=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        OptimalTrajectory(T_star=1.0, xs=np.zeros((3, 6)), us=np.zeros((4, 2)))


def test_problem_is_a_dataclass():
    assert isinstance(flip_problem(N=3), TrajOptProblem)
    assert trajopt.flip_problem().N == 400
