import numpy as np
import pytest

from survey_impute.design import SurveySample, draw_srs
from survey_impute.popgen import PopulationSpec, apply_response_model, generate_population


@pytest.fixture(scope="session")
def p1_population():
    pop = generate_population(PopulationSpec("P1", 20_000, seed=101))
    return apply_response_model(pop, seed=102)


@pytest.fixture(scope="session")
def p3_population():
    pop = generate_population(PopulationSpec("P3", 20_000, seed=201))
    return apply_response_model(pop, seed=202)


@pytest.fixture
def p1_sample(p1_population):
    return draw_srs(p1_population, 400, seed=5)


def make_sample(rng, n=60, p=2, N=None, resp_rate=0.7, unequal=False):
    """Small synthetic sample with a linear outcome."""
    x = rng.uniform(size=(n, p))
    y = 1.0 + x @ np.arange(1, p + 1) + rng.normal(scale=0.5, size=n)
    delta = (rng.uniform(size=n) < resp_rate).astype(int)
    delta[: p + 2] = 1  # always identifiable
    N = N or 50 * n
    if unequal:
        size = rng.uniform(1.0, 3.0, size=n)
        pi = n * size / size.sum() * (n / N) * 0.9
    else:
        pi = np.full(n, n / N)
    y = np.where(delta == 1, y, np.nan)
    return SurveySample(ids=np.arange(n), x=x, y=y, delta=delta, pi=pi, popsize=N)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
