import numpy as np
import pytest

from mnl_bandits.envs import standard_fixture


@pytest.fixture(scope="session")
def fixture_instance():
    return standard_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the acceptance summary."""

    def _report(criterion: int, passed: bool, text: str):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
