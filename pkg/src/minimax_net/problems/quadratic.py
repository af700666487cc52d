"""Quadratic saddle instance with closed-form best responses."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .base import ProblemError, ProblemInstance, project_ball, project_balls_rows


class QuadraticSaddle(ProblemInstance):
    """``f_i(x, y) = -x'A_i x/2 + b_i'x + x'C_i y - (mu/2)||y - c_i||^2`` on balls.

    Each ``Y_i`` is the ball of radius ``radii[i]`` around ``ball_centers[i]``
    (defaults to ``c_i``). ``A_i`` may be indefinite, so individual ``f_i``
    can be nonconvex in ``x``. All agents share the dimension of ``y``.
    """

    name = "quadratic"

    def __init__(self, A, b, C, centers, mu, radii, ball_centers=None, phi_star=None):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        C = np.asarray(C, dtype=float)
        centers = np.asarray(centers, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ProblemError(f"A must have shape (n, d, d), got {A.shape}")
        n, d, _ = A.shape
        if not np.array_equal(A, np.swapaxes(A, 1, 2)):
            raise ProblemError("every A_i must be exactly symmetric")
        if b.shape != (n, d):
            raise ProblemError(f"b must have shape {(n, d)}, got {b.shape}")
        if C.ndim != 3 or C.shape[:2] != (n, d):
            raise ProblemError(f"C must have shape (n, d, d_y), got {C.shape}")
        dy = C.shape[2]
        if centers.shape != (n, dy):
            raise ProblemError(f"centers must have shape {(n, dy)}, got {centers.shape}")
        if not mu > 0:
            raise ProblemError(f"mu must be positive, got {mu}")
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (n,)).copy()
        if np.any(radii < 0):
            raise ProblemError("ball radii must be nonnegative")
        ball_centers = centers.copy() if ball_centers is None else np.asarray(ball_centers, dtype=float)
        if ball_centers.shape != (n, dy):
            raise ProblemError(f"ball_centers must have shape {(n, dy)}, got {ball_centers.shape}")

        self.A, self.b, self.C, self.centers = A, b, C, centers
        self.ball_centers, self.radii = ball_centers, radii
        self.mu = float(mu)
        self.n, self.d, self.dy = n, d, dy
        self.dims = (dy,) * n
        self.D = float(2.0 * radii.max())
        self.L = max(float(np.linalg.norm(self.hessian(i), 2)) for i in range(n))
        self.phi_star = phi_star
        self._CT = np.ascontiguousarray(np.swapaxes(C, 1, 2))

    # -- construction helpers ---------------------------------------------

    @classmethod
    def random(
        cls,
        n: int = 4,
        d: int = 4,
        dy: int = 2,
        seed: int = 0,
        mu: float = 1.0,
        curvature: float = 0.5,
        heterogeneity: float = 0.4,
        coupling: float = 0.3,
        radius: float = 1.0,
        offset: float = 1.0,
        center_scale: float = 0.5,
        homogeneous: bool = False,
    ) -> "QuadraticSaddle":
        """Seeded random instance.

        ``A_i = -curvature * I + E_i`` with symmetric ``E_i`` of spectral norm
        ``heterogeneity`` that sum to zero across agents, so the average
        ``x``-curvature of ``f_i`` is ``-curvature`` while an individual
        ``A_i`` is indefinite once ``heterogeneity > curvature``.
        ``homogeneous=True`` gives every agent the data of agent 0.
        """
        rng = np.random.default_rng(seed)
        E = rng.standard_normal((n, d, d))
        E = 0.5 * (E + np.swapaxes(E, 1, 2))
        if n > 1:
            E -= E.mean(axis=0)
        for i in range(n):
            nrm = np.linalg.norm(E[i], 2)
            if nrm > 0:
                E[i] *= heterogeneity / nrm
        if n > 1:
            E -= E.mean(axis=0)
        A = -curvature * np.eye(d) + E
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
        b = offset * rng.standard_normal((n, d)) / np.sqrt(d)
        C = coupling * rng.standard_normal((n, d, dy)) / np.sqrt(max(d, dy))
        centers = center_scale * rng.standard_normal((n, dy)) / np.sqrt(dy)
        if homogeneous:
            A[:] = A[0]
            b[:] = b[0]
            C[:] = C[0]
            centers[:] = centers[0]
        return cls(A, b, C, centers, mu, radius)

    @classmethod
    def from_text_files(cls, A, b, C, centers, radii, mu, n: int | None = None) -> "QuadraticSaddle":
        """Load whitespace-separated matrices, one matrix row per line.

        ``A`` holds the ``A_i`` stacked vertically (``n*d`` rows of ``d``),
        ``C`` likewise (``n*d`` rows of ``d_y``); ``b`` and ``centers`` have one
        row per agent and ``radii`` one value per agent (or a single value).
        """
        b_arr = np.loadtxt(Path(b), ndmin=2)
        n = b_arr.shape[0] if n is None else n
        d = b_arr.shape[1]
        A_arr = np.loadtxt(Path(A), ndmin=2).reshape(n, d, d)
        C_raw = np.loadtxt(Path(C), ndmin=2)
        C_arr = C_raw.reshape(n, d, C_raw.shape[1])
        c_arr = np.loadtxt(Path(centers), ndmin=2).reshape(n, -1)
        r_arr = np.atleast_1d(np.loadtxt(Path(radii)))
        return cls(A_arr, b_arr, C_arr, c_arr, mu, r_arr if r_arr.size > 1 else r_arr[0])

    def hessian(self, i: int) -> np.ndarray:
        top = np.hstack([-self.A[i], self.C[i]])
        bottom = np.hstack([self.C[i].T, -self.mu * np.eye(self.dy)])
        return np.vstack([top, bottom])

    # -- per-agent contract -------------------------------------------------

    def value(self, i, x, y_i):
        x = np.asarray(x, dtype=float)
        y_i = np.asarray(y_i, dtype=float)
        diff = y_i - self.centers[i]
        return float(-0.5 * x @ self.A[i] @ x + self.b[i] @ x + x @ self.C[i] @ y_i - 0.5 * self.mu * diff @ diff)

    def grad_x(self, i, x, y_i):
        return -self.A[i] @ x + self.b[i] + self.C[i] @ y_i

    def grad_y(self, i, x, y_i):
        return self.C[i].T @ x - self.mu * (np.asarray(y_i) - self.centers[i])

    def project(self, i, v):
        return project_ball(v, self.ball_centers[i], self.radii[i])

    def unconstrained_response(self, i, x):
        return self.centers[i] + self.C[i].T @ x / self.mu

    def best_response(self, i, x):
        return self.project(i, self.unconstrained_response(i, x))

    def value_batch(self, i, x, Ys):
        x = np.asarray(x, dtype=float)
        diff = Ys - self.centers[i]
        const = -0.5 * x @ self.A[i] @ x + self.b[i] @ x
        return const + Ys @ (self.C[i].T @ x) - 0.5 * self.mu * np.einsum("ij,ij->i", diff, diff)

    def ball_blocks(self, i):
        return [(slice(0, self.dy), self.ball_centers[i], float(self.radii[i]))]

    def phi_closed_form(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """``Phi`` and its gradient from the interior formula (valid while no ``y_hat_i`` is clipped)."""
        x = np.asarray(x, dtype=float)
        CTx = np.einsum("nij,j->ni", self._CT, x)
        vals = (
            -0.5 * np.einsum("i,nij,j->n", x, self.A, x)
            + self.b @ x
            + np.einsum("ni,ni->n", CTx, self.centers)
            + np.einsum("ni,ni->n", CTx, CTx) / (2.0 * self.mu)
        )
        grads = (
            -np.einsum("nij,j->ni", self.A, x)
            + self.b
            + np.einsum("nij,nj->ni", self.C, self.centers)
            + np.einsum("nij,nj->ni", self.C, CTx) / self.mu
        )
        return float(vals.mean()), grads.mean(axis=0)

    def clipped_agents(self, x: np.ndarray) -> np.ndarray:
        """Mask of agents whose unconstrained maximizer at ``x`` lies outside ``Y_i``."""
        ystar = self.centers + np.einsum("nij,j->ni", self._CT, np.asarray(x, float)) / self.mu
        return np.linalg.norm(ystar - self.ball_centers, axis=1) > self.radii

    # -- stacked forms --------------------------------------------------------

    def values(self, X, Y):
        Yr = Y.reshape(self.n, self.dy)
        diff = Yr - self.centers
        return (
            -0.5 * np.einsum("ni,nij,nj->n", X, self.A, X)
            + np.einsum("ni,ni->n", self.b, X)
            + np.einsum("ni,nij,nj->n", X, self.C, Yr)
            - 0.5 * self.mu * np.einsum("ni,ni->n", diff, diff)
        )

    def grads(self, X, Y):
        Yr = Y.reshape(self.n, self.dy)
        GX = -np.einsum("nij,nj->ni", self.A, X) + self.b + np.einsum("nij,nj->ni", self.C, Yr)
        GY = np.einsum("nij,nj->ni", self._CT, X) - self.mu * (Yr - self.centers)
        return GX, GY.reshape(-1)

    def project_stack(self, Y):
        Yr = Y.reshape(self.n, self.dy)
        return project_balls_rows(Yr, self.ball_centers, self.radii).reshape(-1)

    def best_response_stack(self, x):
        ystar = self.centers + np.einsum("nij,j->ni", self._CT, np.asarray(x, float)) / self.mu
        return project_balls_rows(ystar, self.ball_centers, self.radii).reshape(-1)

    def phi_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        Yr = self.best_response_stack(x).reshape(self.n, self.dy)
        diff = Yr - self.centers
        Cy = np.einsum("nij,nj->ni", self.C, Yr)
        Ax = np.einsum("nij,j->ni", self.A, x)
        vals = -0.5 * Ax @ x + self.b @ x + Cy @ x - 0.5 * self.mu * np.einsum("ni,ni->n", diff, diff)
        grads = -Ax + self.b + Cy
        return float(vals.mean()), grads.mean(axis=0)

    # -- lower bound ------------------------------------------------------------

    def compute_phi_star(self, box: float = 10.0, starts: int = 8, seed: int = 0) -> float:
        """Multi-start bounded minimization of ``Phi``; stores and returns the best value."""
        rng = np.random.default_rng(seed)
        bounds = [(-box, box)] * self.d
        best = np.inf
        for k in range(starts):
            x0 = np.zeros(self.d) if k == 0 else rng.uniform(-box, box, self.d)
            res = minimize(self.phi_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
            best = min(best, float(res.fun))
        self.phi_star = best
        return best
