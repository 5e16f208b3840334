import numpy as np
import pytest

from bicopter_flip import lincontrol, trajopt
from bicopter_flip.arma import fit_theta, generate_training_data
from bicopter_flip.lincontrol import LqrWeights
from bicopter_flip.sim import PERTURBED_IC, SimScenario


@pytest.fixture(scope="session")
def flip_problem():
    return trajopt.flip_problem()


@pytest.fixture(scope="session")
def flip_traj(flip_problem):
    return trajopt.solve(flip_problem)


@pytest.fixture(scope="session")
def schedule(flip_traj):
    return lincontrol.linearize_schedule(flip_traj, LqrWeights())


@pytest.fixture(scope="session")
def hover():
    return lincontrol.hover_gain()


@pytest.fixture(scope="session")
def training_data(flip_traj, schedule):
    return generate_training_data(flip_traj, schedule, n_runs=100, seed=0)


@pytest.fixture(scope="session")
def arma_model(training_data):
    return fit_theta(training_data, 5, 1e-6)


@pytest.fixture(scope="session")
def scenario(flip_traj, schedule, hover, arma_model):
    def make(mode, x0=PERTURBED_IC, **kw):
        return SimScenario(mode, flip_traj, x0=np.array(x0, dtype=float), sched=schedule,
                           hover=hover, arma=arma_model, **kw)

    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
