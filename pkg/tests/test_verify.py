import math
from dataclasses import replace

import numpy as np
import pytest

from minimax_net.algorithms import run
from minimax_net.problems import QuadraticSaddle, RobustLogisticWRM
from minimax_net.stepsize import RateConstants, plan_corollary1
from minimax_net.topology import mixing_from_config
from minimax_net.verify import (
    InequalityReport,
    OracleError,
    check_all,
    check_consensus_recursion,
    check_descent,
    check_rate_scaling,
    fd_grad_phi,
    fd_one_sided,
    grid_best_response,
    grid_phi,
    grid_points,
    loglog_slope,
    replicate_mean,
)


@pytest.fixture(scope="module")
def good_trace():
    p = QuadraticSaddle.random(n=4, d=2, dy=2, seed=41, curvature=0.7, heterogeneity=0.5)
    W = mixing_from_config("ring", 4)
    plan = plan_corollary1(RateConstants.from_problem(p, W))
    trace = run("dgta", p, W, plan, 300, np.ones(2), record_every=1)
    return p, W, plan, trace


def test_checks_pass_on_a_feasible_run(good_trace):
    p, W, plan, trace = good_trace
    reps = check_all(trace, plan, p, W.lam)
    assert [r.name for r in reps] == ["descent", "best_response_error", "consensus", "tracking", "lyapunov"]
    for r in reps:
        assert r.passed, r.summary()
        assert r.steps.size == 300
        assert all(r.preconditions.values())


def test_checks_flag_tampered_records(good_trace):
    p, W, plan, trace = good_trace
    bad = list(trace)
    r = bad[51]
    bad[51] = replace(r, phi_value=r.phi_value + 1.0, consensus_x=r.consensus_x + 1.0)
    assert 50 in check_descent(bad, plan, p).violated_steps
    assert 50 in check_consensus_recursion(bad, plan, W.lam).violated_steps


def test_checks_need_consecutive_full_records(good_trace):
    p, W, plan, trace = good_trace
    with pytest.raises(ValueError, match="consecutive"):
        check_descent(trace[::2], plan, p)
    bad = [replace(r, delta=None) for r in trace[:5]]
    with pytest.raises(ValueError, match="delta"):
        check_descent(bad, plan, p)


def test_report_tolerance_and_summary():
    rep = InequalityReport("x", np.arange(3), np.array([1.0, 2.0, 3.0 + 1e-10]), np.array([1.0, 2.5, 3.0]))
    assert rep.passed and rep.min_margin == pytest.approx(-1e-10)
    assert rep.summary().startswith("PASS x")
    rep = InequalityReport("y", np.arange(2), np.array([0.0, 2.0]), np.array([1.0, 1.0]))
    assert rep.violated_steps == [1] and "first_t=1" in rep.summary()


def test_grid_points_lie_in_ball_and_cover_it():
    pts = grid_points(np.array([1.0, -1.0]), 0.5, 0.01)
    assert np.all(np.linalg.norm(pts - [1.0, -1.0], axis=1) <= 0.5 + 1e-12)
    probe = np.random.default_rng(0).uniform(-0.35, 0.35, (200, 2)) + [1.0, -1.0]
    dist = np.min(np.linalg.norm(probe[:, None, :] - pts[None], axis=2), axis=1)
    assert dist.max() <= 0.01 * math.sqrt(2) / 2 + 1e-12
    assert grid_points(np.zeros(2), 0.0, 0.1).shape == (1, 2)


def test_grid_best_response_on_logistic_blocks():
    p = RobustLogisticWRM.random(n=2, m=2, p=2, seed=3)
    x = np.array([1.2, -0.4])
    res = 2e-3
    for i in range(p.n):
        err = np.linalg.norm(grid_best_response(p, i, x, res) - p.best_response(i, x))
        assert err <= res * math.sqrt(p.dims[i])


def test_grid_phi_bounds_phi_from_below():
    p = QuadraticSaddle.random(n=2, d=2, dy=2, seed=5, radius=0.3)
    x = np.array([2.0, -1.0])
    assert grid_phi(p, x, 5e-3) <= p.phi(x) + 1e-12
    assert grid_phi(p, x, 5e-3) == pytest.approx(p.phi(x), abs=5e-2)


def test_grid_oracle_rejects_bad_input():
    p = QuadraticSaddle.random(n=1, d=1, dy=4, seed=0)
    with pytest.raises(OracleError):
        grid_best_response(p, 0, np.zeros(1))
    with pytest.raises(OracleError):
        grid_best_response(QuadraticSaddle.random(n=1, d=1, dy=2), 0, np.zeros(1), resolution=0.0)


def test_finite_differences_on_smooth_quadratic():
    p = QuadraticSaddle.random(n=2, d=3, dy=2, seed=6, radius=100.0)
    x = np.array([0.1, 0.2, -0.3])
    _, g = p.phi_and_grad(x)
    np.testing.assert_allclose(fd_grad_phi(p, x), g, atol=1e-8)
    fwd, bwd = fd_one_sided(p, x, 1e-6)
    np.testing.assert_allclose(0.5 * (fwd + bwd), g, atol=1e-7)
    with pytest.raises(ValueError):
        fd_grad_phi(p, x, h=0.0)


def test_slope_of_exact_power_laws():
    T = [10, 100, 1000]
    assert loglog_slope(T, [1 / t for t in T]) == pytest.approx(-1.0)
    assert loglog_slope(T, [5 / math.sqrt(t) for t in T]) == pytest.approx(-0.5)
    rep = check_rate_scaling(lambda t: 3.0 / t, T, -0.8)
    assert rep.passed and rep.values == (0.3, 0.03, 0.003)
    assert not check_rate_scaling(lambda t: 1.0, T, -0.8).passed
    assert "slope=" in rep.summary()


def test_replicate_mean():
    assert replicate_mean(lambda s: float(s), range(5)) == 2.0
