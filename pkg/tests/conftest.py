import numpy as np
import pytest

from perchgen import scenarios
from perchgen.nlp.problem import build_problem, initial_guess, solve
from perchgen.pipeline import generate_maneuver


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Solved maneuvers are expensive (10-25 s each); share them across the session.


@pytest.fixture(scope="session")
def maneuver_80():
    sc = scenarios.perching_80(perception=False)
    return sc, generate_maneuver(sc)


@pytest.fixture(scope="session")
def maneuver_80_pa():
    sc = scenarios.perching_80(perception=True)
    return sc, generate_maneuver(sc)


@pytest.fixture(scope="session")
def maneuver_180():
    sc = scenarios.perching_180()
    return sc, generate_maneuver(sc)


@pytest.fixture(scope="session")
def maneuver_stationary():
    sc = scenarios.stationary()
    return sc, generate_maneuver(sc)


@pytest.fixture(scope="session")
def maneuver_adversarial():
    sc = scenarios.adversarial_gap()
    return sc, generate_maneuver(sc)


@pytest.fixture(scope="session")
def climb_solution():
    sc = scenarios.vertical_climb()
    problem = build_problem(sc)
    dv, report = solve(problem, initial_guess(sc))
    return sc, problem, dv, report


@pytest.fixture(scope="session")
def stationary_solution():
    sc = scenarios.stationary()
    problem = build_problem(sc)
    dv, report = solve(problem, initial_guess(sc))
    return sc, problem, dv, report


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """``acceptance(n, ok, detail)`` records and prints the verdict line of criterion ``n``."""

    def record(n, ok, detail):
        line = f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
