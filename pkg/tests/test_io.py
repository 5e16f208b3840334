import numpy as np
import pytest

from bicopter_flip import io
from bicopter_flip.arma import ArmaController, ArmaModel
from bicopter_flip.lincontrol import hover_gain
from bicopter_flip.sim import simulate


def test_fmt_round_trips_full_precision():
    rng = np.random.default_rng(0)
    v = np.concatenate([rng.normal(size=50) * 10.0 ** rng.integers(-20, 20, 50),
                        [0.0, -0.0, np.pi, 1 / 3, np.inf, -np.inf]])
    back = io.parse_vec(io.fmt_vec(v))
    assert back.tobytes() == v.tobytes()


def test_trajectory_round_trip(tmp_path, flip_traj):
    p = tmp_path / "traj.csv"
    io.write_trajectory(p, flip_traj, 1e-6, 1e-4)
    lines = p.read_text().splitlines()
    rows = [ln for ln in lines if not ln.startswith("#")]
    assert rows[0] == "k,t,r1,v1,r2,v2,psi,omega,uT,uR"
    assert len(rows) == 402
    back = io.read_trajectory(p)
    assert back.T_star == flip_traj.T_star
    assert back.xs.tobytes() == flip_traj.xs.tobytes()
    assert back.us.tobytes() == flip_traj.us.tobytes()
    np.testing.assert_array_equal(back.x_f, flip_traj.x_f)
    np.testing.assert_array_equal(back.u_f, flip_traj.u_f)
    assert any(ln.startswith("# T_star=") for ln in lines)


def test_gain_round_trip(tmp_path, schedule):
    p = tmp_path / "gains.csv"
    io.write_gains(p, schedule)
    header = [ln for ln in p.read_text().splitlines() if not ln.startswith("#")][0]
    assert header == "k,t," + ",".join(f"K{i}{j}" for i in (1, 2) for j in range(1, 7))
    back = io.read_gains(p)
    assert len(back) == 401 and not back.hover
    assert back.K.tobytes() == schedule.K.tobytes()
    assert back.times.tobytes() == schedule.times.tobytes()
    np.testing.assert_array_equal(back.weights.R1, schedule.weights.R1)


def test_hover_gain_round_trip(tmp_path):
    hg = hover_gain()
    p = tmp_path / "hover.csv"
    io.write_gains(p, hg)
    back = io.read_gains(p)
    assert back.hover and len(back) == 1
    assert back.K.tobytes() == hg.K.tobytes()


def test_arma_round_trip(tmp_path, arma_model):
    p = tmp_path / "model.txt"
    io.write_arma(p, arma_model)
    text = p.read_text()
    assert "l_w = 5" in text
    back = io.read_arma(p)
    assert back.theta_pos.shape == (15, 1) and back.theta_ang.shape == (10, 1)
    assert back.theta_pos.tobytes() == arma_model.theta_pos.tobytes()
    assert back.theta_ang.tobytes() == arma_model.theta_ang.tobytes()
    assert back.wiring == arma_model.wiring and back.ridge == arma_model.ridge


def test_arma_round_trip_two_output_wiring(tmp_path):
    rng = np.random.default_rng(1)
    from bicopter_flip.arma import POSITION_BOTH

    m = ArmaModel([ArmaController(3, 2, 2, rng.normal(size=(12, 2))),
                   ArmaController(3, 1, 1, rng.normal(size=(6, 1)))],
                  POSITION_BOTH, "position_both", 0.5)
    io.write_arma(tmp_path / "m.txt", m)
    back = io.read_arma(tmp_path / "m.txt")
    assert back.channels == POSITION_BOTH
    assert back.theta_pos.tobytes() == m.theta_pos.tobytes()


def test_sim_log_round_trip(tmp_path, scenario):
    r = simulate(scenario("fuzzy"))
    p = tmp_path / "sim.csv"
    io.write_sim_log(p, r)
    header = [ln for ln in p.read_text().splitlines() if not ln.startswith("#")][0]
    assert header == ("t,r1,v1,r2,v2,psi,omega,r1s,v1s,r2s,v2s,psis,omegas,uTs,uRs,"
                      "uTfb,uRfb,uT,uR,mu_arma,mu_lqr")
    back = io.read_sim_log(p)
    for name in ("t", "x", "x_star", "u_star", "u_fb", "u_total", "mu_arma", "mu_lqr"):
        assert getattr(back, name).tobytes() == getattr(r, name).tobytes(), name
    assert back.mode == "fuzzy" and back.T_star == r.T_star


def test_wrong_header_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# N=2\nk,t,a,b\n0,0,1,2\n")
    with pytest.raises(io.FormatError):
        io.read_trajectory(p)


def test_ragged_row_rejected(tmp_path, flip_traj):
    p = tmp_path / "traj.csv"
    io.write_trajectory(p, flip_traj)
    lines = p.read_text().splitlines()
    lines[-1] = lines[-1].rsplit(",", 1)[0]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.FormatError):
        io.read_trajectory(p)
