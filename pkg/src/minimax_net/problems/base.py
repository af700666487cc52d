"""Contract shared by every decentralized NC-SC problem instance.

The maximization variables of all agents live in one flat vector; agent
``i`` owns ``Y[problem.slices[i]]``. Per-agent methods realize the contract
directly, and the stacked methods (``grads``, ``project_stack``, ...) are
the batched forms the algorithms call. Subclasses override the stacked
methods when they can vectorize.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np


class ProblemError(ValueError):
    """Problem data violates the instance's preconditions."""


class BestResponseError(RuntimeError):
    """Inner maximization failed to certify convergence."""


def project_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{u : ||u - center|| <= radius}``."""
    v = np.asarray(v, dtype=float)
    center = np.asarray(center, dtype=float)
    diff = v - center
    dist = np.linalg.norm(diff)
    if dist <= radius:
        return v.copy()
    if radius <= 0.0:
        return center.copy()
    return center + radius * diff / dist


def project_balls_rows(V: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Row-wise ``project_ball`` for stacked rows, centers and radii."""
    diff = V - centers
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    scale = np.ones_like(dist)
    outside = dist > radii
    with np.errstate(divide="ignore", invalid="ignore"):
        scale[outside] = radii[outside] / dist[outside]
    return np.where(outside[:, None], centers + scale[:, None] * diff, V)


class ProblemInstance:
    """Decentralized problem ``min_x max_{y_i in Y_i} (1/n) sum_i f_i(x, y_i)``.

    Subclasses must set ``n``, ``d``, ``dims``, ``L``, ``mu``, ``D`` and
    implement ``value``, ``grad_x``, ``grad_y``, ``project`` and
    ``best_response``.
    """

    n: int
    d: int
    dims: tuple[int, ...]
    L: float
    mu: float
    D: float
    phi_star: float | None = None
    name = "abstract"

    # -- layout -----------------------------------------------------------

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)]).astype(int)

    @cached_property
    def slices(self) -> tuple[slice, ...]:
        off = self.offsets
        return tuple(slice(int(off[i]), int(off[i + 1])) for i in range(self.n))

    @property
    def dim_y(self) -> int:
        return int(self.offsets[-1])

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def split(self, Y: np.ndarray) -> list[np.ndarray]:
        return [Y[s] for s in self.slices]

    def join(self, parts) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    # -- per-agent contract -------------------------------------------------

    def value(self, i: int, x: np.ndarray, y_i: np.ndarray) -> float:
        raise NotImplementedError

    def grad_x(self, i: int, x: np.ndarray, y_i: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_y(self, i: int, x: np.ndarray, y_i: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, i: int, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def best_response(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def ball_blocks(self, i: int) -> list[tuple[slice, np.ndarray, float]]:
        """Decomposition of ``Y_i`` into balls ``(slice within y_i, center, radius)``.

        Only instances whose ``f_i`` is separable across these blocks list
        more than one block; brute-force oracles rely on that.
        """
        raise NotImplementedError

    # -- stacked forms --------------------------------------------------------

    def value_batch(self, i: int, x: np.ndarray, Ys: np.ndarray) -> np.ndarray:
        """``f_i(x, y)`` for each row ``y`` of ``Ys``."""
        return np.array([self.value(i, x, y) for y in Ys])

    def values(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return np.array([self.value(i, X[i], Y[s]) for i, s in enumerate(self.slices)])

    def grads(self, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(grad_x F(X, Y), grad_y F(X, Y))`` with ``X`` of shape ``(n, d)``."""
        GX = np.empty((self.n, self.d))
        GY = np.empty(self.dim_y)
        for i, s in enumerate(self.slices):
            GX[i] = self.grad_x(i, X[i], Y[s])
            GY[s] = self.grad_y(i, X[i], Y[s])
        return GX, GY

    def project_stack(self, Y: np.ndarray) -> np.ndarray:
        out = np.empty_like(Y)
        for i, s in enumerate(self.slices):
            out[s] = self.project(i, Y[s])
        return out

    def best_response_stack(self, x: np.ndarray) -> np.ndarray:
        """``[y_hat_1(x), ..., y_hat_n(x)]`` flattened, all agents at the same ``x``."""
        return self.join(self.best_response(i, x) for i in range(self.n))

    def contains(self, Y: np.ndarray, tol: float = 1e-9) -> bool:
        """Whether every ``y_i`` lies in ``Y_i`` up to ``tol``."""
        for i, s in enumerate(self.slices):
            for sub, center, radius in self.ball_blocks(i):
                if np.linalg.norm(Y[s][sub] - center) > radius + tol:
                    return False
        return True

    # -- primal function ------------------------------------------------------

    def phi_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """``Phi(x) = mean_i f_i(x, y_hat_i(x))`` and its gradient by Danskin's theorem."""
        x = np.asarray(x, dtype=float)
        Yhat = self.best_response_stack(x)
        X = np.broadcast_to(x, (self.n, self.d))
        val = float(np.mean(self.values(X, Yhat)))
        GX, _ = self.grads(X, Yhat)
        return val, GX.mean(axis=0)

    def phi(self, x: np.ndarray) -> float:
        return self.phi_and_grad(x)[0]

    def describe(self) -> dict:
        return {
            "family": self.name,
            "n": self.n,
            "d": self.d,
            "dims": list(self.dims),
            "L": self.L,
            "mu": self.mu,
            "kappa": self.kappa,
            "D": self.D,
            "phi_star": self.phi_star,
        }
