"""Per-iteration diagnostics and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

CSV_HEADER = (
    "t",
    "grad_phi_norm_sq",
    "phi",
    "consensus_x",
    "tracking_err",
    "delta",
    "lyapunov",
    "mean_grad_norm_sq",
    "samples",
    "comms",
)


@dataclass(frozen=True)
class TraceRecord:
    t: int
    grad_phi_norm_sq: float | None
    phi_value: float | None
    consensus_x: float
    tracking_err: float
    delta: float | None
    lyapunov: float | None
    mean_grad_norm_sq: float
    sample_count: int
    comm_count: int
    grad_count: int = 0

    def row(self) -> list[str]:
        vals = (
            self.t,
            self.grad_phi_norm_sq,
            self.phi_value,
            self.consensus_x,
            self.tracking_err,
            self.delta,
            self.lyapunov,
            self.mean_grad_norm_sq,
            self.sample_count,
            self.comm_count,
        )
        return [format_value(v) for v in vals]


def format_value(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


@dataclass(frozen=True)
class LyapunovCoefficients:
    c1: float
    c2: float
    c3: float


def lyapunov_coefficients(L: float, mu: float, n: int, lam: float, eta_y: float) -> LyapunovCoefficients:
    kappa = L / mu
    gap = (1.0 - lam) * (1.0 + lam)
    return LyapunovCoefficients(
        c1=300.0 * kappa**2 * L**2 / (n * gap),
        c2=8.0 * L**2 / (n * eta_y * mu),
        c3=2400.0 * kappa**2 * L**2 / (n * gap**3),
    )


def lyapunov_penalty(problem, plan, lam, consensus_x, delta, tracking_err) -> float:
    """The three weighted error terms of the potential (everything except ``Phi - Phi*``)."""
    co = lyapunov_coefficients(problem.L, problem.mu, problem.n, lam, plan.eta_y)
    ex = plan.eta_x
    return co.c1 * ex * consensus_x + co.c2 * ex * delta + co.c3 * ex**3 * tracking_err


def lyapunov(problem, state, plan, lam: float, lower_bound: float | None = None) -> float | None:
    """Potential value at ``state``; ``None`` when no lower bound on ``Phi`` is known."""
    lb = problem.phi_star if lower_bound is None else lower_bound
    if lb is None:
        return None
    xbar = state.x.mean(axis=0)
    phi, _ = problem.phi_and_grad(xbar)
    delta = best_response_gap(problem, xbar, state.y)
    return phi - lb + lyapunov_penalty(
        problem, plan, lam, deviation_sq(state.x), delta, deviation_sq(state.g)
    )


def deviation_sq(M: np.ndarray) -> float:
    """``||M - 1 mean(M)^T||_F^2``."""
    D = M - M.mean(axis=0)
    return float(np.einsum("ij,ij->", D, D))


def best_response_gap(problem, xbar: np.ndarray, Y: np.ndarray) -> float:
    diff = problem.best_response_stack(xbar) - Y
    return float(diff @ diff)


def record(problem, state, plan, lam: float, *, lower_bound: float | None = None, full: bool = True) -> TraceRecord:
    """Snapshot every diagnostic at ``state`` without modifying it.

    ``full=False`` skips the quantities that need best responses
    (``Phi``, its gradient, ``delta`` and the potential).
    """
    cons = deviation_sq(state.x)
    track = deviation_sq(state.g)
    GX, _ = problem.grads(state.x, state.y)
    mg = GX.mean(axis=0)
    mean_grad = float(mg @ mg)
    gp = phi = delta = lyap = None
    if full:
        xbar = state.x.mean(axis=0)
        phi, grad = problem.phi_and_grad(xbar)
        gp = float(grad @ grad)
        delta = best_response_gap(problem, xbar, state.y)
        lb = problem.phi_star if lower_bound is None else lower_bound
        if lb is not None:
            lyap = phi - lb + lyapunov_penalty(problem, plan, lam, cons, delta, track)
    return TraceRecord(
        t=state.t,
        grad_phi_norm_sq=gp,
        phi_value=phi,
        consensus_x=cons,
        tracking_err=track,
        delta=delta,
        lyapunov=lyap,
        mean_grad_norm_sq=mean_grad,
        sample_count=state.sample_count,
        comm_count=state.comm_count,
        grad_count=state.grad_count,
    )


def trace_to_csv(trace: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in trace:
        w.writerow(rec.row())
    return buf.getvalue()


def _parse(v: str, kind):
    return None if v == "NA" else kind(v)


def trace_from_csv(text: str) -> list[TraceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("not a trace CSV: unexpected header")
    out = []
    for r in rows[1:]:
        if not r:
            continue
        out.append(
            TraceRecord(
                t=int(r[0]),
                grad_phi_norm_sq=_parse(r[1], float),
                phi_value=_parse(r[2], float),
                consensus_x=float(r[3]),
                tracking_err=float(r[4]),
                delta=_parse(r[5], float),
                lyapunov=_parse(r[6], float),
                mean_grad_norm_sq=float(r[7]),
                sample_count=int(r[8]),
                comm_count=int(r[9]),
            )
        )
    return out


def averaged_metric(trace: list[TraceRecord]) -> float:
    """Mean of ``||grad Phi(x_bar)||^2`` over the recorded iterations before the last one."""
    vals = [r.grad_phi_norm_sq for r in trace[:-1] if r.grad_phi_norm_sq is not None]
    if not vals:
        vals = [r.grad_phi_norm_sq for r in trace if r.grad_phi_norm_sq is not None]
    return float(np.mean(vals))


def min_metric(trace: list[TraceRecord]) -> float:
    return float(min(r.grad_phi_norm_sq for r in trace if r.grad_phi_norm_sq is not None))


def first_hit(trace: list[TraceRecord], threshold: float) -> int | None:
    """First recorded ``t`` with ``||grad Phi(x_bar)||^2 <= threshold``."""
    for r in trace:
        if r.grad_phi_norm_sq is not None and r.grad_phi_norm_sq <= threshold:
            return r.t
    return None


def records_as_dicts(trace) -> list[dict]:
    return [asdict(r) for r in trace]
