"""Gradient-tracking descent-ascent over a network, plus baselines.

Every step function is a pure transition ``state -> new state``. The
shared skeleton per iteration is

1. ``x_i <- sum_j w_ij (x_j - eta_x g_j)``
2. ``y_i <- Proj_i(y_i + eta_y * grad_y)`` using the gradient cached at the
   pre-update ``(x_i, y_i)``
3. fresh gradients at the new point, then the tracker update.

Two tracker forms exist. ``"local"`` adds each agent's own gradient
difference after mixing:  ``g_i <- sum_j w_ij g_j + h_i_new - h_i_old``.
``"neighbor"`` mixes the corrected trackers:
``g_i <- sum_j w_ij (g_j + h_j_new - h_j_old)``. Both keep the
agent-average of ``g`` equal to the average current gradient. The
deterministic method uses the local form and the stochastic one the
neighbor form; with a noiseless oracle the stochastic method therefore
matches ``dgta_step(..., tracker="neighbor")`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .problems import ProblemInstance, StochasticOracle
from .topology import MixingMatrix

ALGORITHMS = ("dgta", "dsgta", "gda", "sgda", "gtda")
TRACKERS = ("local", "neighbor")


class DivergenceError(FloatingPointError):
    """An iterate became NaN or infinite."""

    def __init__(self, quantity: str, t: int):
        super().__init__(f"non-finite value in {quantity} at iteration {t}")
        self.quantity = quantity
        self.t = t


class InfeasibleStartError(ValueError):
    """Initial ``y`` lies outside the constraint set."""


@dataclass(frozen=True)
class SwarmState:
    """Full iterate state.

    ``gx``/``gy`` hold the gradients at the current ``(x, y)`` that the
    method itself uses: exact gradients for deterministic methods, the
    cached mini-batch gradients for stochastic ones.
    """

    t: int
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    comm_count: int = 0
    sample_count: int = 0
    grad_count: int = 0
    comm_floats: int = 0

    @property
    def h_x_prev(self) -> np.ndarray:
        return self.gx

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def x_bar(self) -> np.ndarray:
        return self.x.mean(axis=0)


def _stack_init(problem: ProblemInstance, x0, y0):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (problem.n, 1))
    if x0.shape != (problem.n, problem.d):
        raise ValueError(f"x0 must have shape ({problem.d},) or {(problem.n, problem.d)}, got {x0.shape}")
    if y0 is None:
        y0 = problem.project_stack(np.zeros(problem.dim_y))
    elif isinstance(y0, (list, tuple)):
        y0 = problem.join(y0)
    y0 = np.asarray(y0, dtype=float).ravel()
    if y0.shape != (problem.dim_y,):
        raise ValueError(f"y0 must have {problem.dim_y} entries, got {y0.size}")
    if not problem.contains(y0):
        raise InfeasibleStartError("initial y_i must lie in Y_i for every agent")
    return x0.copy(), y0.copy()


def dgta_init(problem: ProblemInstance, x0, y0=None) -> SwarmState:
    """Start state with ``g_i = grad_x f_i(x_i, y_i)``.

    ``x0`` may be one vector shared by all agents or an ``(n, d)`` stack;
    ``y0`` a flat vector, a per-agent list, or ``None`` for the projection
    of the origin.
    """
    x, y = _stack_init(problem, x0, y0)
    GX, GY = problem.grads(x, y)
    return SwarmState(t=0, x=x, y=y, g=GX.copy(), gx=GX, gy=GY, grad_count=2)


def dsgta_init(oracle: StochasticOracle, x0, y0=None) -> SwarmState:
    """Start state with ``g_i`` equal to the first mini-batch x-gradient."""
    x, y = _stack_init(oracle.base, x0, y0)
    HX, HY = oracle.sample_all(x, y, 0)
    n = oracle.n
    return SwarmState(t=0, x=x, y=y, g=HX.copy(), gx=HX, gy=HY, sample_count=2 * n * oracle.b, grad_count=2)


def _tracking_step(state, problem, W, plan, tracker, new_grads) -> tuple:
    eta_x, eta_y = plan.eta_x, plan.eta_y
    x_new = W.mix(state.x - eta_x * state.g)
    y_new = problem.project_stack(state.y + eta_y * state.gy)
    GX, GY = new_grads(x_new, y_new)
    if tracker == "local":
        g_new = (W.mix(state.g) - state.gx) + GX
        payload = 2 * state.x.size
    elif tracker == "neighbor":
        g_new = W.mix((state.g - state.gx) + GX)
        payload = 3 * state.x.size
    else:
        raise ValueError(f"unknown tracker {tracker!r}; expected one of {TRACKERS}")
    return x_new, y_new, g_new, GX, GY, payload


def dgta_step(state: SwarmState, problem: ProblemInstance, W: MixingMatrix, plan, tracker: str = "local") -> SwarmState:
    """One deterministic gradient-tracking descent-ascent iteration."""
    x, y, g, GX, GY, payload = _tracking_step(state, problem, W, plan, tracker, problem.grads)
    return replace(
        state, t=state.t + 1, x=x, y=y, g=g, gx=GX, gy=GY,
        comm_count=state.comm_count + 2,
        grad_count=state.grad_count + 2,
        comm_floats=state.comm_floats + payload,
    )


def dsgta_step(state: SwarmState, oracle: StochasticOracle, W: MixingMatrix, plan) -> SwarmState:
    """One stochastic iteration; new batches are drawn at the updated point."""
    t_next = state.t + 1
    x, y, g, HX, HY, payload = _tracking_step(
        state, oracle.base, W, plan, "neighbor", lambda X, Y: oracle.sample_all(X, Y, t_next)
    )
    return replace(
        state, t=t_next, x=x, y=y, g=g, gx=HX, gy=HY,
        comm_count=state.comm_count + 2,
        sample_count=state.sample_count + 2 * oracle.n * oracle.b,
        grad_count=state.grad_count + 2,
        comm_floats=state.comm_floats + payload,
    )


def gtda_baseline_step(state: SwarmState, problem: ProblemInstance, W: MixingMatrix, plan, K_inner: int = 3) -> SwarmState:
    """Gradient tracking on ``x`` with ``K_inner`` projected ascent steps on ``y`` per iteration.

    The inner steps run at the fixed pre-update ``x_i``; the first reuses the
    cached ``grad_y``, so ``K_inner = 1`` is exactly ``dgta_step``. Each
    iteration costs ``K_inner + 1`` gradient evaluations per agent.
    """
    if K_inner < 1:
        raise ValueError(f"K_inner must be at least 1, got {K_inner}")
    y, gy = state.y, state.gy
    for k in range(K_inner):
        if k > 0:
            _, gy = problem.grads(state.x, y)
        y = problem.project_stack(y + plan.eta_y * gy)
    x_new = W.mix(state.x - plan.eta_x * state.g)
    GX, GY = problem.grads(x_new, y)
    g_new = (W.mix(state.g) - state.gx) + GX
    return replace(
        state, t=state.t + 1, x=x_new, y=y, g=g_new, gx=GX, gy=GY,
        comm_count=state.comm_count + 2,
        grad_count=state.grad_count + K_inner + 1,
        comm_floats=state.comm_floats + 2 * state.x.size,
    )


def gda_init(problem: ProblemInstance, x0, y0=None) -> SwarmState:
    return dgta_init(problem, x0, y0)


def gda_step(state: SwarmState, problem: ProblemInstance, plan) -> SwarmState:
    """Plain (projected) gradient descent-ascent, each agent on its own."""
    x = state.x - plan.eta_x * state.gx
    y = problem.project_stack(state.y + plan.eta_y * state.gy)
    GX, GY = problem.grads(x, y)
    return replace(state, t=state.t + 1, x=x, y=y, g=GX.copy(), gx=GX, gy=GY, grad_count=state.grad_count + 2)


def sgda_init(oracle: StochasticOracle, x0, y0=None) -> SwarmState:
    return dsgta_init(oracle, x0, y0)


def sgda_step(state: SwarmState, oracle: StochasticOracle, plan) -> SwarmState:
    """Mini-batch counterpart of ``gda_step``."""
    x = state.x - plan.eta_x * state.gx
    y = oracle.base.project_stack(state.y + plan.eta_y * state.gy)
    HX, HY = oracle.sample_all(x, y, state.t + 1)
    return replace(
        state, t=state.t + 1, x=x, y=y, g=HX.copy(), gx=HX, gy=HY,
        sample_count=state.sample_count + 2 * oracle.n * oracle.b,
        grad_count=state.grad_count + 2,
    )


def _check_finite(state: SwarmState) -> None:
    if np.isfinite(state.x.sum() + state.y.sum() + state.g.sum() + state.gx.sum() + state.gy.sum()):
        return
    for name in ("x", "y", "g", "gx", "gy"):
        arr = getattr(state, name)
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(name, state.t)


def make_stepper(algorithm: str, target, W: MixingMatrix | None, plan, *, K_inner: int = 3, tracker: str = "local"):
    """Return ``(init(x0, y0), step(state))`` closures for ``algorithm``.

    ``target`` is a ``StochasticOracle`` for ``dsgta``/``sgda`` and a
    ``ProblemInstance`` (or an oracle, whose base is used) otherwise.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    stochastic = algorithm in ("dsgta", "sgda")
    if stochastic and not isinstance(target, StochasticOracle):
        target = StochasticOracle(target, sigma=0.0, b=getattr(plan, "b", 1))
    if not stochastic and isinstance(target, StochasticOracle):
        target = target.base
    if algorithm in ("dgta", "dsgta", "gtda") and W is None:
        raise ValueError(f"{algorithm} needs a mixing matrix")
    if algorithm == "dgta":
        return (lambda x0, y0: dgta_init(target, x0, y0)), (lambda s: dgta_step(s, target, W, plan, tracker))
    if algorithm == "dsgta":
        return (lambda x0, y0: dsgta_init(target, x0, y0)), (lambda s: dsgta_step(s, target, W, plan))
    if algorithm == "gtda":
        return (lambda x0, y0: dgta_init(target, x0, y0)), (lambda s: gtda_baseline_step(s, target, W, plan, K_inner))
    if algorithm == "gda":
        return (lambda x0, y0: gda_init(target, x0, y0)), (lambda s: gda_step(s, target, plan))
    return (lambda x0, y0: sgda_init(target, x0, y0)), (lambda s: sgda_step(s, target, plan))


def run(
    algorithm: str,
    target,
    W: MixingMatrix | None,
    plan,
    T: int,
    x0,
    y0=None,
    *,
    record_every: int = 10,
    lower_bound: float | None = None,
    hooks: Iterable[Callable[[SwarmState], None]] = (),
    K_inner: int = 3,
    tracker: str = "local",
    keep_state: bool = False,
    stop_when: Callable | None = None,
):
    """Run ``T`` iterations and return the list of ``TraceRecord``.

    Records are taken at ``t = 0, k, 2k, ...`` and at ``t = T``. Hooks see
    every state (including the initial one) and must not mutate it. With
    ``keep_state`` the final state is returned as a second value.
    ``stop_when(record)`` ends the run early once it returns true.
    """
    from .metrics import record

    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if record_every < 1:
        raise ValueError(f"record_every must be positive, got {record_every}")
    problem = target.base if isinstance(target, StochasticOracle) else target
    lam = W.lam if W is not None else 0.0
    init, step = make_stepper(algorithm, target, W, plan, K_inner=K_inner, tracker=tracker)
    hooks = tuple(hooks)

    state = init(x0, y0)
    _check_finite(state)
    trace = [record(problem, state, plan, lam, lower_bound=lower_bound)]
    for h in hooks:
        h(state)
    for t in range(1, int(T) + 1):
        state = step(state)
        _check_finite(state)
        for h in hooks:
            h(state)
        if t % record_every == 0 or t == T:
            trace.append(record(problem, state, plan, lam, lower_bound=lower_bound))
            if stop_when is not None and stop_when(trace[-1]):
                break
    return (trace, state) if keep_state else trace
