"""Stepsize and batch-size schedules with their constraint slack."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

REGIMES = ("corollary1", "corollary2_b1", "corollary3", "manual")


@dataclass(frozen=True)
class RateConstants:
    L: float
    mu: float
    lam: float
    n: int = 1
    sigma: float = 0.0
    D: float = 1.0
    delta_phi: float = 1.0
    T: int = 1
    b: int = 1

    def __post_init__(self):
        if not self.L >= self.mu > 0:
            raise ValueError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")
        if self.delta_phi < 0:
            raise ValueError("delta_phi must be nonnegative")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def gap_sq(self) -> float:
        """``1 - lambda^2`` as ``(1 - lambda)(1 + lambda)``."""
        return (1.0 - self.lam) * (1.0 + self.lam)

    @classmethod
    def from_problem(cls, problem, W, **kw) -> "RateConstants":
        return cls(L=problem.L, mu=problem.mu, lam=W.lam, n=problem.n, D=kw.pop("D", problem.D), **kw)


@dataclass(frozen=True)
class Constraint:
    name: str
    value: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.value

    @property
    def satisfied(self) -> bool:
        # relative rounding allowance: plans built to sit exactly on a cap must pass
        return self.value <= self.bound * (1.0 + 1e-12)


@dataclass(frozen=True)
class StepsizePlan:
    eta_x: float
    eta_y: float
    b: int = 1
    regime: str = "manual"
    slack: tuple[Constraint, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not (self.eta_x > 0 and self.eta_y > 0):
            raise ValueError(f"stepsizes must be positive, got eta_x={self.eta_x}, eta_y={self.eta_y}")
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"batch size must be a positive integer, got {self.b}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def feasible(self) -> bool:
        return all(c.satisfied for c in self.slack)

    def as_dict(self) -> dict:
        return {
            "eta_x": self.eta_x,
            "eta_y": self.eta_y,
            "b": self.b,
            "regime": self.regime,
            "slack": [
                {"name": c.name, "value": c.value, "bound": c.bound, "margin": c.margin, "satisfied": c.satisfied}
                for c in self.slack
            ],
        }


def eta_y_cap(c: RateConstants) -> float:
    return math.sqrt(c.gap_sq) / (9.0 * (c.L + c.mu))


def eta_x_caps(c: RateConstants, eta_y: float) -> dict[str, float]:
    k, L, g = c.kappa, c.L, c.gap_sq
    return {
        "eta_x<=gap^2/(120*sqrt3*kappa*L)": g**2 / (120.0 * math.sqrt(3.0) * k * L),
        "eta_x<=eta_y/(8*sqrt6*kappa^2)": eta_y / (8.0 * math.sqrt(6.0) * k**2),
        "eta_x<=(eta_y*mu)^(1/4)*gap/(50*kappa*L)": (eta_y * c.mu) ** 0.25 * g / (50.0 * k * L),
    }


def gamma_constant(c: RateConstants) -> float:
    """Inverse deterministic x-stepsize; each summand dominates one ``eta_x`` cap."""
    k, L, mu, g = c.kappa, c.L, c.mu, c.gap_sq
    return (
        120.0 * math.sqrt(3.0) * k * L / g**2
        + 72.0 * math.sqrt(6.0) * k**2 * (L + mu) / math.sqrt(g)
        + 110.0 * k**1.25 * L / g**1.125
    )


def check_constraints(plan: StepsizePlan, c: RateConstants) -> tuple[Constraint, ...]:
    """Evaluate the ``eta_y`` cap and the three ``eta_x`` caps for ``plan``."""
    out = [Constraint("eta_y<=sqrt(gap)/(9*(L+mu))", plan.eta_y, eta_y_cap(c))]
    out += [Constraint(name, plan.eta_x, bound) for name, bound in eta_x_caps(c, plan.eta_y).items()]
    return tuple(out)


def _finish(eta_x, eta_y, b, regime, c) -> StepsizePlan:
    plan = StepsizePlan(eta_x=eta_x, eta_y=eta_y, b=b, regime=regime)
    return replace(plan, slack=check_constraints(plan, c))


def plan_corollary1(c: RateConstants) -> StepsizePlan:
    """Deterministic constant stepsizes (the noise level is ignored)."""
    return _finish(1.0 / gamma_constant(c), eta_y_cap(c), 1, "corollary1", c)


def plan_corollary2_b1(c: RateConstants) -> StepsizePlan:
    """Horizon-dependent stepsizes for single-sample batches."""
    if c.sigma <= 0:
        raise ValueError("this schedule needs sigma > 0; use plan_corollary1 for exact gradients")
    if c.T < 1 or c.D <= 0 or c.delta_phi <= 0:
        raise ValueError("need T >= 1, D > 0 and delta_phi > 0")
    s2 = c.sigma**2
    eta_y = 1.0 / (9.0 * (c.L + c.mu) / math.sqrt(c.gap_sq) + math.sqrt(3.0 * c.T * s2 / c.D**2))
    eta_x = 1.0 / (math.sqrt(c.L * c.kappa * s2 * c.T / (c.n * c.delta_phi)) + gamma_constant(c))
    return _finish(eta_x, eta_y, 1, "corollary2_b1", c)


def batch_for_accuracy(kappa: float, sigma: float, epsilon: float) -> int:
    if sigma == 0:
        return 1
    raw = kappa * sigma**2 / epsilon**2
    # kappa*sigma^2/eps^2 often lands a few ulps above an integer
    rounded = round(raw)
    if abs(raw - rounded) <= 1e-9 * max(1.0, raw):
        raw = rounded
    return max(1, math.ceil(raw))


def plan_corollary3_large_b(c: RateConstants, epsilon: float) -> StepsizePlan:
    """Deterministic stepsizes with batch ``ceil(kappa sigma^2 / epsilon^2)``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    base = plan_corollary1(c)
    return _finish(base.eta_x, base.eta_y, batch_for_accuracy(c.kappa, c.sigma, epsilon), "corollary3", c)


def manual_plan(eta_x: float, eta_y: float, b: int = 1, c: RateConstants | None = None) -> StepsizePlan:
    """User-chosen stepsizes; slack is evaluated when constants are given but never enforced."""
    plan = StepsizePlan(eta_x=eta_x, eta_y=eta_y, b=b, regime="manual")
    return replace(plan, slack=check_constraints(plan, c)) if c is not None else plan


def max_eta_x(c: RateConstants, eta_y: float) -> float:
    """Largest ``eta_x`` meeting all three caps for the given ``eta_y``."""
    return min(eta_x_caps(c, eta_y).values())
