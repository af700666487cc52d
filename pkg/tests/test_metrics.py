import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minimax_net.algorithms import dgta_init, dgta_step, run
from minimax_net.metrics import (
    CSV_HEADER,
    TraceRecord,
    averaged_metric,
    first_hit,
    format_value,
    lyapunov,
    lyapunov_coefficients,
    min_metric,
    record,
    records_as_dicts,
    trace_from_csv,
    trace_to_csv,
)
from minimax_net.problems import QuadraticSaddle
from minimax_net.stepsize import manual_plan
from minimax_net.topology import mixing_from_config


@pytest.fixture
def state_and_problem():
    p = QuadraticSaddle.random(n=4, d=3, dy=2, seed=31)
    W = mixing_from_config("ring", 4)
    plan = manual_plan(0.05, 0.1)
    s = dgta_init(p, np.random.default_rng(0).standard_normal((4, 3)))
    for _ in range(7):
        s = dgta_step(s, p, W, plan)
    return p, W, plan, s


def test_record_against_direct_computation(state_and_problem):
    p, W, plan, s = state_and_problem
    r = record(p, s, plan, W.lam, lower_bound=-3.0)
    xbar = s.x.mean(axis=0)
    cons = sum(np.sum((s.x[i] - xbar) ** 2) for i in range(4))
    gbar = s.g.mean(axis=0)
    track = sum(np.sum((s.g[i] - gbar) ** 2) for i in range(4))
    Yhat = np.concatenate([p.best_response(i, xbar) for i in range(4)])
    delta = np.sum((Yhat - s.y) ** 2)
    mg = np.mean([p.grad_x(i, s.x[i], s.y[p.slices[i]]) for i in range(4)], axis=0)
    gphi = np.mean([p.grad_x(i, xbar, Yhat[p.slices[i]]) for i in range(4)], axis=0)
    phi = np.mean([p.value(i, xbar, Yhat[p.slices[i]]) for i in range(4)])
    assert r.t == 7
    assert r.consensus_x == pytest.approx(cons, rel=1e-12)
    assert r.tracking_err == pytest.approx(track, rel=1e-12)
    assert r.delta == pytest.approx(delta, rel=1e-12, abs=1e-15)
    assert r.mean_grad_norm_sq == pytest.approx(mg @ mg, rel=1e-12)
    assert r.grad_phi_norm_sq == pytest.approx(gphi @ gphi, rel=1e-12)
    assert r.phi_value == pytest.approx(phi, rel=1e-12)
    co = lyapunov_coefficients(p.L, p.mu, 4, W.lam, plan.eta_y)
    expect = phi + 3.0 + plan.eta_x * (co.c1 * cons + co.c2 * delta) + co.c3 * plan.eta_x**3 * track
    assert r.lyapunov == pytest.approx(expect, rel=1e-12)
    assert lyapunov(p, s, plan, W.lam, lower_bound=-3.0) == pytest.approx(expect, rel=1e-12)


def test_lyapunov_coefficients_frozen():
    co = lyapunov_coefficients(L=2.0, mu=1.0, n=4, lam=0.5, eta_y=0.1)
    # kappa=2, 1-lambda^2=0.75
    assert co.c1 == pytest.approx(300 * 4 * 4 / (4 * 0.75))
    assert co.c2 == pytest.approx(8 * 4 / (4 * 0.1))
    assert co.c3 == pytest.approx(2400 * 4 * 4 / (4 * 0.75**3))


def test_lyapunov_needs_lower_bound(state_and_problem):
    p, W, plan, s = state_and_problem
    assert p.phi_star is None
    assert lyapunov(p, s, plan, W.lam) is None
    assert record(p, s, plan, W.lam).lyapunov is None


def test_record_without_best_responses(state_and_problem):
    p, W, plan, s = state_and_problem
    r = record(p, s, plan, W.lam, full=False)
    assert r.grad_phi_norm_sq is None and r.phi_value is None and r.delta is None
    assert "NA" in r.row()


def test_record_does_not_mutate(state_and_problem):
    p, W, plan, s = state_and_problem
    before = [a.copy() for a in (s.x, s.y, s.g)]
    record(p, s, plan, W.lam, lower_bound=0.0)
    for a, b in zip(before, (s.x, s.y, s.g)):
        assert np.array_equal(a, b)


def test_csv_roundtrip_is_exact():
    p = QuadraticSaddle.random(n=4, d=2, dy=2, seed=1)
    W = mixing_from_config("path", 4)
    trace = run("dgta", p, W, manual_plan(0.01, 0.1), 30, np.ones(2), record_every=3, lower_bound=-10.0)
    text = trace_to_csv(trace)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = trace_from_csv(text)
    assert [replace(r, grad_count=0) for r in trace] == back
    with pytest.raises(ValueError):
        trace_from_csv("a,b\n1,2\n")


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_value_roundtrips_floats(v):
    assert float(format_value(v)) == v


def test_format_value_kinds():
    assert format_value(None) == "NA"
    assert format_value(np.int64(12)) == "12"
    assert format_value(0.1) == "0.10000000000000001"


def _rec(t, v):
    return TraceRecord(t, v, 0.0, 0.0, 0.0, 0.0, None, 0.0, 0, 0)


def test_summaries():
    trace = [_rec(0, 4.0), _rec(10, 2.0), _rec(20, None), _rec(30, 1.0), _rec(40, 0.5)]
    assert averaged_metric(trace) == pytest.approx((4 + 2 + 1) / 3)
    assert min_metric(trace) == 0.5
    assert first_hit(trace, 1.5) == 30
    assert first_hit(trace, 0.1) is None
    assert records_as_dicts(trace)[1]["grad_phi_norm_sq"] == 2.0
    assert averaged_metric([_rec(0, 3.0)]) == 3.0
    assert math.isfinite(averaged_metric(trace))
