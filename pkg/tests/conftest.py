import math

import pytest

from parking_ilu.intensity import ConstantIntensity, EnvironmentParams, SinusoidalIntensity

LN2 = math.log(2.0)


@pytest.fixture
def env():
    return EnvironmentParams(S=-2.0, L=2.0)


@pytest.fixture
def wide_env():
    return EnvironmentParams(S=-2.0, L=2.5)


@pytest.fixture
def unit_rate(env):
    return ConstantIntensity(1.0, env)


@pytest.fixture
def sinusoid(env):
    return SinusoidalIntensity(1.5, 0.3, 1.0, env)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
