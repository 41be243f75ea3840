import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from atst.belief import action_matrices
from atst.features import exact_engine
from atst.generators import benchmark_three_state, random_tabular

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def bench():
    return benchmark_three_state()


@pytest.fixture(scope="session")
def bench_ams(bench):
    return action_matrices(bench)


@pytest.fixture(scope="session")
def bench_engine(bench, bench_ams):
    return exact_engine(bench, bench_ams)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_models():
    return [random_tabular(3, 2, 0.7, rng=i) for i in range(3)]


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance._LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance._LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
