import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_net.algorithms import (
    DivergenceError,
    InfeasibleStartError,
    dgta_init,
    dgta_step,
    dsgta_init,
    dsgta_step,
    gtda_baseline_step,
    make_stepper,
    run,
)
from minimax_net.problems import QuadraticSaddle, RobustLogisticWRM, StochasticOracle
from minimax_net.stepsize import manual_plan
from minimax_net.topology import mixing_from_config


def reference_dgta(problem, Wm, eta_x, eta_y, x0, y0, T, neighbor=False):
    """Per-agent loops over the dense weight matrix."""
    n = problem.n
    X = [np.array(x0, float) for _ in range(n)]
    Y = [np.array(y0[s], float) for s in problem.slices]
    H = [problem.grad_x(i, X[i], Y[i]) for i in range(n)]
    G = [h.copy() for h in H]
    for _ in range(T):
        gy = [problem.grad_y(i, X[i], Y[i]) for i in range(n)]
        Xn = [sum(Wm[i, j] * (X[j] - eta_x * G[j]) for j in range(n)) for i in range(n)]
        Yn = [problem.project(i, Y[i] + eta_y * gy[i]) for i in range(n)]
        Hn = [problem.grad_x(i, Xn[i], Yn[i]) for i in range(n)]
        if neighbor:
            G = [sum(Wm[i, j] * (G[j] - H[j] + Hn[j]) for j in range(n)) for i in range(n)]
        else:
            G = [sum(Wm[i, j] * G[j] for j in range(n)) - H[i] + Hn[i] for i in range(n)]
        X, Y, H = Xn, Yn, Hn
    return np.array(X), np.concatenate(Y), np.array(G)


@pytest.fixture
def setup():
    p = QuadraticSaddle.random(n=5, d=3, dy=2, seed=21)
    W = mixing_from_config("ring", 5)
    return p, W, manual_plan(0.02, 0.1)


@pytest.mark.parametrize("tracker", ["local", "neighbor"])
def test_dgta_matches_reference_loops(setup, tracker):
    p, W, plan = setup
    x0 = np.array([0.5, -0.2, 0.1])
    y0 = p.project_stack(np.zeros(p.dim_y))
    s = dgta_init(p, x0, y0)
    for _ in range(25):
        s = dgta_step(s, p, W, plan, tracker=tracker)
    X, Y, G = reference_dgta(p, W.W, plan.eta_x, plan.eta_y, x0, y0, 25, neighbor=tracker == "neighbor")
    np.testing.assert_allclose(s.x, X, atol=1e-12)
    np.testing.assert_allclose(s.y, Y, atol=1e-12)
    np.testing.assert_allclose(s.g, G, atol=1e-12)


def test_noiseless_dsgta_equals_neighbor_tracker(setup):
    p, W, plan = setup
    x0 = np.ones(3) * 0.3
    a = dgta_init(p, x0)
    b = dsgta_init(StochasticOracle(p, 0.0), x0)
    orc = StochasticOracle(p, 0.0)
    for _ in range(100):
        a = dgta_step(a, p, W, plan, tracker="neighbor")
        b = dsgta_step(b, orc, W, plan)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y) and np.array_equal(a.g, b.g)


def test_gtda_one_inner_step_is_dgta(setup):
    p, W, plan = setup
    a = b = dgta_init(p, np.ones(3))
    for _ in range(50):
        a = dgta_step(a, p, W, plan)
        b = gtda_baseline_step(b, p, W, plan, K_inner=1)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_gtda_inner_steps_at_fixed_x(setup):
    p, W, plan = setup
    s = dgta_init(p, np.ones(3))
    y = s.y
    for _ in range(3):
        _, gy = p.grads(s.x, y)
        y = p.project_stack(y + plan.eta_y * gy)
    out = gtda_baseline_step(s, p, W, plan, K_inner=3)
    np.testing.assert_allclose(out.y, y, atol=1e-15)
    assert out.grad_count == s.grad_count + 4
    with pytest.raises(ValueError):
        gtda_baseline_step(s, p, W, plan, K_inner=0)


def test_counters(setup):
    p, W, plan = setup
    orc = StochasticOracle(p, 0.3, b=4, seed=0)
    s = dsgta_init(orc, np.zeros(3))
    assert s.sample_count == 2 * 5 * 4
    for _ in range(3):
        s = dsgta_step(s, orc, W, plan)
    assert s.t == 3 and s.comm_count == 6 and s.sample_count == 4 * 2 * 5 * 4
    assert s.comm_floats == 3 * 3 * s.x.size
    d = dgta_init(p, np.zeros(3))
    d = dgta_step(d, p, W, plan)
    assert d.comm_floats == 2 * d.x.size and d.grad_count == 4


def test_infeasible_start_rejected(setup):
    p, W, plan = setup
    with pytest.raises(InfeasibleStartError):
        dgta_init(p, np.zeros(3), np.full(p.dim_y, 100.0))
    with pytest.raises(ValueError, match="x0"):
        dgta_init(p, np.zeros(4))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_detected():
    p = QuadraticSaddle.random(n=3, d=2, dy=1, seed=0, curvature=2.0)
    W = mixing_from_config("ring", 3)
    with pytest.raises(DivergenceError) as exc:
        run("dgta", p, W, manual_plan(50.0, 0.1), 5000, np.ones(2), record_every=5000)
    assert exc.value.quantity in ("x", "y", "g", "gx", "gy")
    assert exc.value.t > 0


def test_record_schedule_and_early_stop(setup):
    p, W, plan = setup
    trace = run("dgta", p, W, plan, 25, np.ones(3), record_every=10)
    assert [r.t for r in trace] == [0, 10, 20, 25]
    trace, state = run("dgta", p, W, plan, 100, np.ones(3), record_every=5, keep_state=True,
                       stop_when=lambda r: r.t >= 15)
    assert trace[-1].t == 15 and state.t == 15
    with pytest.raises(ValueError):
        run("dgta", p, W, plan, 0, np.ones(3))
    with pytest.raises(ValueError):
        run("dgta", p, W, plan, 5, np.ones(3), record_every=0)


def test_make_stepper_validation(setup):
    p, W, plan = setup
    with pytest.raises(ValueError, match="unknown algorithm"):
        make_stepper("adam", p, W, plan)
    with pytest.raises(ValueError, match="mixing"):
        make_stepper("dgta", p, None, plan)
    with pytest.raises(ValueError, match="tracker"):
        dgta_step(dgta_init(p, np.ones(3)), p, W, plan, tracker="global")


def test_centralized_baselines_run(setup):
    p, _, plan = setup
    t1 = run("gda", p, None, plan, 20, np.ones(3), record_every=20)
    t2 = run("sgda", StochasticOracle(p, 0.1, 2, 0), None, plan, 20, np.ones(3), record_every=20)
    assert t1[-1].comm_count == 0 and t2[-1].sample_count == 21 * 2 * 5 * 2


def test_logistic_dgta_descends():
    p = RobustLogisticWRM.random(seed=0)
    W = mixing_from_config("ring", 4)
    trace = run("dgta", p, W, manual_plan(0.05, 0.1), 400, np.full(2, 0.5), record_every=400)
    assert trace[-1].phi_value < trace[0].phi_value


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["ring", "path", "star", "complete"]), st.integers(2, 7), st.integers(0, 10_000),
       st.sampled_from(["local", "neighbor"]))
def test_tracker_average_invariant(kind, n, seed, tracker):
    p = QuadraticSaddle.random(n=n, d=2, dy=2, seed=seed)
    W = mixing_from_config(kind, n)
    s = dgta_init(p, np.random.default_rng(seed).standard_normal((n, 2)))
    for _ in range(30):
        s = dgta_step(s, p, W, manual_plan(0.01, 0.05), tracker=tracker)
        np.testing.assert_allclose(s.g.mean(axis=0), s.gx.mean(axis=0), atol=1e-12)
