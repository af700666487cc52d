import numpy as np
import pytest

from minimax_net.problems import QuadraticSaddle
from minimax_net.stepsize import RateConstants, plan_corollary1
from minimax_net.topology import mixing_from_config

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def benchmark_problem(n: int = 4, seed: int = 0) -> QuadraticSaddle:
    """Mildly heterogeneous nonconvex quadratic used by the rate and topology checks."""
    p = QuadraticSaddle.random(n=n, seed=seed, curvature=0.9, heterogeneity=0.2)
    p.compute_phi_star()
    return p


def corollary1(problem, W):
    return plan_corollary1(RateConstants.from_problem(problem, W))


@pytest.fixture(scope="session")
def bench():
    p = benchmark_problem()
    W = mixing_from_config("ring", 4)
    return p, W, corollary1(p, W), np.ones(p.d) / 2.0


@pytest.fixture
def small_quad():
    return QuadraticSaddle.random(n=4, d=3, dy=2, seed=11)
