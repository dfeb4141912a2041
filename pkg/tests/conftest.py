import sys

import numpy as np
import pytest

from jeans_blowup import reference_ode as ro
from jeans_blowup import wave_solver as ws
from jeans_blowup.model_core import ModelParameters
from jeans_blowup.transforms import HomogeneousChart


@pytest.fixture(scope="session")
def params():
    return ModelParameters()


@pytest.fixture(scope="session")
def traj(params):
    return ro.integrate(params)


@pytest.fixture(scope="session")
def t_m(traj):
    return ro.estimate_blowup_time(traj)[0]


@pytest.fixture(scope="session")
def chart(traj, t_m):
    return HomogeneousChart(traj, t_m)


@pytest.fixture(scope="session")
def bump_run(params, traj, t_m):
    return ws.run(params, ws.InitialData(eps=1e-3), ws.GridConfig(n_cells=512), traj=traj, t_m=t_m)


@pytest.fixture(scope="session")
def flat_run(params, traj, t_m):
    return ws.run(params, ws.InitialData(eps=0.0), ws.GridConfig(n_cells=256), traj=traj, t_m=t_m)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    RESULTS = getattr(mod, "RESULTS", None)
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
