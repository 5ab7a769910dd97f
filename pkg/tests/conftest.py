import numpy as np
import pytest

from enspod import fem, fom, harness
from enspod.mesh import generate_offset_annulus


@pytest.fixture(scope="session")
def coarse_mesh():
    return generate_offset_annulus(h_target=0.2)


@pytest.fixture(scope="session")
def coarse_space(coarse_mesh):
    return fem.TaylorHoodSpace(coarse_mesh)


@pytest.fixture(scope="session")
def coarse_flow(coarse_space):
    return fom.FlowOperators(coarse_space)


@pytest.fixture(scope="session")
def small_config():
    return harness.ExperimentConfig(h_target=0.2, t_start=0.2, t_end=0.6, R=4)


@pytest.fixture(scope="session")
def small_offline(small_config):
    return harness.run_offline(small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
