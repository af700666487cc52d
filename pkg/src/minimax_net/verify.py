"""Brute-force oracles and per-step inequality checks over recorded traces.

The recursion checks take a trace recorded at every iteration of a
noiseless run (``record_every=1``) and return an ``InequalityReport`` whose
margins are ``rhs - lhs`` for each consecutive pair of records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .metrics import TraceRecord, lyapunov_penalty


class OracleError(ValueError):
    """The requested brute-force computation is infeasible."""


@dataclass(frozen=True)
class InequalityReport:
    name: str
    steps: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tolerance: float = 1e-9
    preconditions: dict = field(default_factory=dict)

    @property
    def margins(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def allowance(self) -> np.ndarray:
        scale = np.maximum(1.0, np.maximum(np.abs(self.lhs), np.abs(self.rhs)))
        return self.tolerance * scale

    @property
    def min_margin(self) -> float:
        m = self.margins
        return float(m.min()) if m.size else math.inf

    @property
    def violated_steps(self) -> list[int]:
        return [int(t) for t in self.steps[self.margins < -self.allowance]]

    @property
    def passed(self) -> bool:
        return not self.violated_steps

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "" if self.passed else f" violations={len(self.violated_steps)} first_t={self.violated_steps[0]}"
        return f"{status} {self.name}: min_margin={self.min_margin:.3e} steps={self.steps.size}{extra}"


# -- oracles ------------------------------------------------------------------


def _ball_grid(center: np.ndarray, radius: float, resolution: float) -> np.ndarray:
    """Grid of spacing ``resolution`` over the bounding box, projected onto the ball."""
    dim = center.size
    if radius == 0:
        return center[None, :].copy()
    k = int(math.ceil(radius / resolution))
    axis = np.arange(-k, k + 1) * resolution
    pts = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    nrm = np.linalg.norm(pts, axis=1)
    out = nrm > radius
    pts[out] *= (radius / nrm[out])[:, None]
    return center + pts


def grid_best_response(problem, i: int, x: np.ndarray, resolution: float = 1e-3) -> np.ndarray:
    """Exhaustive grid argmax of ``f_i(x, .)`` over ``Y_i``.

    Each ball block of ``Y_i`` (at most 3-dimensional) is scanned on its own
    with the other blocks held at their centers, which is exact for
    block-separable objectives.
    """
    if not resolution > 0:
        raise OracleError("resolution must be positive")
    blocks = problem.ball_blocks(i)
    if any(c.size > 3 for _, c, _ in blocks):
        raise OracleError("grid search needs every ball block of dimension at most 3")
    base = np.zeros(problem.dims[i])
    for sub, center, _ in blocks:
        base[sub] = center
    best = base.copy()
    for sub, center, radius in blocks:
        cand = _ball_grid(np.asarray(center, float), float(radius), resolution)
        Ys = np.tile(base, (cand.shape[0], 1))
        Ys[:, sub] = cand
        vals = problem.value_batch(i, x, Ys)
        best[sub] = cand[int(np.argmax(vals))]
    return best


def grid_phi(problem, x: np.ndarray, resolution: float = 1e-3) -> float:
    """``Phi(x)`` with every inner maximization done by grid search."""
    return float(np.mean([problem.value(i, x, grid_best_response(problem, i, x, resolution)) for i in range(problem.n)]))


def fd_grad_phi(problem, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``Phi`` along the coordinate axes."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (problem.phi(x + e) - problem.phi(x - e)) / (2.0 * h)
    return out


def fd_one_sided(problem, x: np.ndarray, h: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward difference quotients of ``Phi``."""
    x = np.asarray(x, dtype=float)
    f0 = problem.phi(x)
    fwd, bwd = np.empty_like(x), np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        fwd[k] = (problem.phi(x + e) - f0) / h
        bwd[k] = (f0 - problem.phi(x - e)) / h
    return fwd, bwd


# -- recursion checks -----------------------------------------------------------


def _pairs(trace: Sequence[TraceRecord], need: Sequence[str]):
    for name in need:
        if any(getattr(r, name) is None for r in trace):
            raise ValueError(f"trace lacks {name}; record it at every step")
    ts = np.array([r.t for r in trace])
    if ts.size < 2 or np.any(np.diff(ts) != 1):
        raise ValueError("recursion checks need records at every consecutive iteration")
    return trace[:-1], trace[1:], ts[:-1]


def _arr(recs, name):
    return np.array([getattr(r, name) for r in recs], dtype=float)


def check_descent(trace, plan, problem, tolerance: float = 1e-9) -> InequalityReport:
    """``Phi(xbar+) <= Phi - ex/2 |grad Phi|^2 - ex/2 (1 - 2 kappa L ex) mg + ex L^2/n (delta + cons)``."""
    now, nxt, ts = _pairs(trace, ("phi_value", "grad_phi_norm_sq", "delta"))
    ex, L, k, n = plan.eta_x, problem.L, problem.kappa, problem.n
    rhs = (
        _arr(now, "phi_value")
        - 0.5 * ex * _arr(now, "grad_phi_norm_sq")
        - 0.5 * ex * (1.0 - 2.0 * k * L * ex) * _arr(now, "mean_grad_norm_sq")
        + ex * L**2 / n * (_arr(now, "delta") + _arr(now, "consensus_x"))
    )
    pre = {"eta_x<=1/(2*kappa*L)": ex <= 1.0 / (2.0 * k * L)}
    return InequalityReport("descent", ts, _arr(nxt, "phi_value"), rhs, tolerance, pre)


def check_delta_recursion(trace, plan, problem, tolerance: float = 1e-9) -> InequalityReport:
    """``delta+ <= (1 - ey mu/4) delta + 9 L^2 ey/mu cons + 4 n kappa^2 ex^2/(ey mu) mg``."""
    now, nxt, ts = _pairs(trace, ("delta",))
    ex, ey, L, mu, k, n = plan.eta_x, plan.eta_y, problem.L, problem.mu, problem.kappa, problem.n
    rhs = (
        (1.0 - ey * mu / 4.0) * _arr(now, "delta")
        + 9.0 * L**2 * ey / mu * _arr(now, "consensus_x")
        + 4.0 * n * k**2 * ex**2 / (ey * mu) * _arr(now, "mean_grad_norm_sq")
    )
    pre = {"eta_y<=1/(8(L+mu))": ey <= 1.0 / (8.0 * (L + mu))}
    return InequalityReport("best_response_error", ts, _arr(nxt, "delta"), rhs, tolerance, pre)


def check_consensus_recursion(trace, plan, lam: float, tolerance: float = 1e-9) -> InequalityReport:
    """``cons+ <= (1 + lam^2)/2 cons + 2 lam^2 ex^2/(1 - lam^2) track``."""
    now, nxt, ts = _pairs(trace, ())
    ex = plan.eta_x
    gap = (1.0 - lam) * (1.0 + lam)
    rhs = 0.5 * (1.0 + lam**2) * _arr(now, "consensus_x") + 2.0 * lam**2 * ex**2 / gap * _arr(now, "tracking_err")
    return InequalityReport("consensus", ts, _arr(nxt, "consensus_x"), rhs, tolerance, {})


def check_tracking_recursion(trace, plan, problem, lam: float, tolerance: float = 1e-9) -> InequalityReport:
    """Contraction of the tracker deviation, driven by ``delta``, ``cons`` and ``mg``."""
    now, nxt, ts = _pairs(trace, ("delta",))
    ex, ey, L, mu, k, n = plan.eta_x, plan.eta_y, problem.L, problem.mu, problem.kappa, problem.n
    gap = (1.0 - lam) * (1.0 + lam)
    rhs = (
        0.25 * (3.0 + lam**2) * _arr(now, "tracking_err")
        + 18.0 * L**2 / gap * _arr(now, "delta")
        + (2.0 + 9.0 * ey * L**2 / mu) * 9.0 * L**2 / gap * _arr(now, "consensus_x")
        + 9.0 * ex**2 * n * L**2 / gap * (1.0 + (4.0 + ey * mu) * k**2 / (ey * mu)) * _arr(now, "mean_grad_norm_sq")
    )
    pre = {"eta_x<=gap^1.5/(6*sqrt2*L)": ex <= gap**1.5 / (6.0 * math.sqrt(2.0) * L)}
    return InequalityReport("tracking", ts, _arr(nxt, "tracking_err"), rhs, tolerance, pre)


def check_lyapunov_descent(trace, plan, problem, lam: float, tolerance: float = 1e-9) -> InequalityReport:
    """``V+ <= V - ex/2 |grad Phi(xbar)|^2`` for the potential ``V``.

    ``Phi*`` cancels in the difference, so the check needs no lower bound.
    """
    now, nxt, ts = _pairs(trace, ("phi_value", "grad_phi_norm_sq", "delta"))

    def potential(recs):
        return np.array([
            r.phi_value + lyapunov_penalty(problem, plan, lam, r.consensus_x, r.delta, r.tracking_err)
            for r in recs
        ])

    rhs = potential(now) - 0.5 * plan.eta_x * _arr(now, "grad_phi_norm_sq")
    return InequalityReport("lyapunov", ts, potential(nxt), rhs, tolerance, {})


def check_all(trace, plan, problem, lam: float, tolerance: float = 1e-9) -> list[InequalityReport]:
    return [
        check_descent(trace, plan, problem, tolerance),
        check_delta_recursion(trace, plan, problem, tolerance),
        check_consensus_recursion(trace, plan, lam, tolerance),
        check_tracking_recursion(trace, plan, problem, lam, tolerance),
        check_lyapunov_descent(trace, plan, problem, lam, tolerance),
    ]


# -- rates ------------------------------------------------------------------------


@dataclass(frozen=True)
class RateReport:
    T: tuple[int, ...]
    values: tuple[float, ...]
    slope: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.slope <= self.threshold

    def summary(self) -> str:
        pts = ", ".join(f"T={t}: {v:.3e}" for t, v in zip(self.T, self.values))
        return f"{'PASS' if self.passed else 'FAIL'} rate slope={self.slope:.3f} (<= {self.threshold}) [{pts}]"


def loglog_slope(T_list: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(T)``."""
    lt = np.log(np.asarray(T_list, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(lt, lv, 1)[0])


def check_rate_scaling(metric_at: Callable[[int], float], T_list: Sequence[int], threshold: float) -> RateReport:
    """Evaluate ``metric_at(T)`` (an averaged stationarity measure) on each horizon and fit the slope."""
    vals = tuple(float(metric_at(int(T))) for T in T_list)
    return RateReport(tuple(int(T) for T in T_list), vals, loglog_slope(T_list, vals), threshold)


def replicate_mean(fn: Callable[[int], float], seeds: Sequence[int]) -> float:
    return float(np.mean([fn(s) for s in seeds]))


def grid_points(center, radius, resolution):
    """Exposed for tests: the candidate set scanned by the grid oracle."""
    return _ball_grid(np.asarray(center, float), float(radius), resolution)

