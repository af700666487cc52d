import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_net.stepsize import (
    RateConstants,
    StepsizePlan,
    batch_for_accuracy,
    check_constraints,
    eta_x_caps,
    manual_plan,
    max_eta_x,
    plan_corollary1,
    plan_corollary2_b1,
    plan_corollary3_large_b,
)

# L=2, mu=1, lambda=0.5: kappa=2, 1-lambda^2=0.75
C = RateConstants(L=2.0, mu=1.0, lam=0.5, n=4)
FROZEN_ETA_Y = 0.032075014954979206
FROZEN_ETA_X = 0.0002152856805284862
FROZEN_CAPS = (0.0006765823467065928, 0.00040920531318665944, 0.001586985594676721)


def test_deterministic_plan_frozen_values():
    plan = plan_corollary1(C)
    assert plan.eta_y == pytest.approx(FROZEN_ETA_Y, rel=1e-14)
    assert plan.eta_x == pytest.approx(FROZEN_ETA_X, rel=1e-14)
    assert plan.regime == "corollary1" and plan.b == 1
    assert plan.feasible


def test_eta_x_caps_frozen():
    caps = tuple(eta_x_caps(C, FROZEN_ETA_Y).values())
    for got, want in zip(caps, FROZEN_CAPS):
        assert got == pytest.approx(want, rel=1e-14)
    assert max_eta_x(C, FROZEN_ETA_Y) == pytest.approx(min(FROZEN_CAPS), rel=1e-14)


def test_complete_graph_eta_y():
    c = RateConstants(L=3.0, mu=0.5, lam=0.0)
    assert plan_corollary1(c).eta_y == pytest.approx(1 / 31.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 100.0), st.floats(0.01, 10.0), st.floats(0.0, 0.999), st.integers(1, 64))
def test_deterministic_plan_always_feasible(ratio, mu, lam, n):
    c = RateConstants(L=mu * ratio, mu=mu, lam=lam, n=n)
    plan = plan_corollary1(c)
    assert all(con.satisfied for con in check_constraints(plan, c))


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(0.0, 0.99), st.floats(0.01, 5.0), st.integers(1, 10**7))
def test_horizon_plan_shrinks_and_reports_slack(ratio, lam, sigma, T):
    c = RateConstants(L=ratio, mu=1.0, lam=lam, n=4, sigma=sigma, T=T, D=2.0, delta_phi=1.0)
    plan = plan_corollary2_b1(c)
    base = plan_corollary1(c)
    assert plan.eta_x < base.eta_x and plan.eta_y < base.eta_y
    names = [s.name for s in plan.slack]
    assert len(names) == 4
    assert plan.feasible == all(s.satisfied for s in plan.slack)


def test_horizon_plan_can_break_the_ratio_cap():
    # for these constants the ratio cap fails at long horizons; the plan says so instead of hiding it
    c = RateConstants(L=2.0, mu=1.0, lam=0.5, n=4, sigma=1.0, T=10**6, D=2.0, delta_phi=1.0)
    plan = plan_corollary2_b1(c)
    ratio = [s for s in plan.slack if s.name.startswith("eta_x<=eta_y")][0]
    assert not ratio.satisfied and ratio.margin < 0
    assert not plan.feasible


def test_horizon_plan_formula():
    c = RateConstants(L=2.0, mu=1.0, lam=0.5, n=4, sigma=0.5, T=100, D=2.0, delta_phi=3.0)
    plan = plan_corollary2_b1(c)
    assert plan.eta_y == pytest.approx(1 / (9 * 3 / math.sqrt(0.75) + math.sqrt(3 * 100 * 0.25 / 4)))
    assert plan.eta_x == pytest.approx(1 / (math.sqrt(2 * 2 * 0.25 * 100 / 12) + 1 / FROZEN_ETA_X))


def test_horizon_plan_needs_noise():
    with pytest.raises(ValueError, match="sigma"):
        plan_corollary2_b1(RateConstants(L=2.0, mu=1.0, lam=0.5))


@pytest.mark.parametrize(
    "kappa,sigma,eps,expected",
    [(2.0, 0.5, 0.1, 50), (2.0, 0.5, 0.3, 6), (1.0, 0.0, 0.1, 1), (10.0, 1.0, 1.0, 10), (3.0, 0.1, 1.0, 1)],
)
def test_batch_for_accuracy(kappa, sigma, eps, expected):
    assert batch_for_accuracy(kappa, sigma, eps) == expected


def test_large_batch_plan():
    c = RateConstants(L=2.0, mu=1.0, lam=0.5, sigma=0.5)
    plan = plan_corollary3_large_b(c, 0.1)
    assert plan.b == 50 and plan.regime == "corollary3"
    assert plan.eta_x == pytest.approx(FROZEN_ETA_X, rel=1e-14)
    with pytest.raises(ValueError):
        plan_corollary3_large_b(c, 0.0)


def test_manual_plan_reports_but_does_not_enforce():
    plan = manual_plan(1.0, 1.0, c=C)
    assert not plan.feasible
    assert all(s.margin < 0 for s in plan.slack)
    assert manual_plan(1.0, 1.0).slack == ()
    d = plan.as_dict()
    assert d["regime"] == "manual" and len(d["slack"]) == 4 and d["slack"][0]["satisfied"] is False


def test_invalid_inputs():
    with pytest.raises(ValueError):
        StepsizePlan(eta_x=0.0, eta_y=1.0)
    with pytest.raises(ValueError):
        StepsizePlan(eta_x=1.0, eta_y=1.0, b=0)
    with pytest.raises(ValueError):
        StepsizePlan(eta_x=1.0, eta_y=1.0, regime="adaptive")
    with pytest.raises(ValueError):
        RateConstants(L=0.5, mu=1.0, lam=0.5)
    with pytest.raises(ValueError):
        RateConstants(L=2.0, mu=1.0, lam=1.0)
