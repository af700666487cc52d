"""Mini-batch stochastic gradient oracle with per-agent counter-based streams."""

from __future__ import annotations

import numpy as np

from .base import ProblemInstance

_BLOCK_FLOATS = 65536


class StochasticOracle:
    """Unbiased noisy gradients: exact gradient plus averaged Gaussian draws.

    A single draw perturbs the joint vector ``(grad_x, grad_y)`` of agent ``i``
    by isotropic Gaussian noise with per-coordinate variance
    ``sigma**2 / (d + d_i)``, so the total per-draw variance is exactly
    ``sigma**2`` and a size-``b`` average has variance ``sigma**2 / b``.

    Draw ``j`` of iteration ``t`` for agent ``i`` is a pure function of
    ``(seed, i, t, j)``: each agent owns a Philox stream keyed by
    ``(seed, i)``, and iterations are grouped into fixed-size blocks whose
    stream position is set through the counter. Blocks are generated lazily
    and cached, so the order in which agents or iterations are queried does
    not change any value.
    """

    def __init__(self, base: ProblemInstance, sigma: float = 0.0, b: int = 1, seed: int = 0):
        if sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        if int(b) != b or b < 1:
            raise ValueError(f"batch size must be a positive integer, got {b}")
        self.base = base
        self.sigma = float(sigma)
        self.b = int(b)
        self.seed = int(seed)
        self.n = base.n
        self._dims = [base.d + di for di in base.dims]
        self._keys = [
            np.random.SeedSequence([self.seed, i]).generate_state(2, dtype=np.uint64) for i in range(self.n)
        ]
        self._block = [max(1, min(256, _BLOCK_FLOATS // (self.b * dim))) for dim in self._dims]
        self._cache: list[dict[int, np.ndarray]] = [{} for _ in range(self.n)]
        self._calls = [0] * self.n

    @property
    def exact(self) -> bool:
        return self.sigma == 0.0

    def _noise_block(self, i: int, k: int) -> np.ndarray:
        cache = self._cache[i]
        blk = cache.get(k)
        if blk is None:
            B, dim = self._block[i], self._dims[i]
            gen = np.random.Generator(np.random.Philox(key=self._keys[i], counter=[0, k, 0, 0]))
            draws = gen.standard_normal((B, self.b, dim))
            blk = draws.mean(axis=1) * (self.sigma / np.sqrt(dim))
            cache.clear()  # iterations are consumed in order; one block per agent is enough
            cache[k] = blk
        return blk

    def noise(self, i: int, t: int) -> np.ndarray:
        """Mini-batch-averaged noise vector of agent ``i`` at iteration ``t`` (length ``d + d_i``)."""
        B = self._block[i]
        return self._noise_block(i, t // B)[t % B]

    def sample_grad_pair(self, i: int, x, y_i, t: int | None = None):
        """Mini-batch gradients ``(h_x, h_y)`` at ``(x, y_i)``.

        Without ``t`` the agent's own call counter selects the iteration, so
        repeated calls advance only agent ``i``'s stream.
        """
        if t is None:
            t = self._calls[i]
            self._calls[i] += 1
        gx = np.asarray(self.base.grad_x(i, x, y_i), dtype=float)
        gy = np.asarray(self.base.grad_y(i, x, y_i), dtype=float)
        if self.exact:
            return gx, gy
        z = self.noise(i, t)
        d = self.base.d
        return gx + z[:d], gy + z[d:]

    def sample_all(self, X: np.ndarray, Y: np.ndarray, t: int):
        """Stacked mini-batch gradients of every agent at iteration ``t``."""
        GX, GY = self.base.grads(X, Y)
        if self.exact:
            return GX, GY
        d = self.base.d
        GX = GX.copy()
        GY = GY.copy()
        for i, s in enumerate(self.base.slices):
            z = self.noise(i, t)
            GX[i] += z[:d]
            GY[s] += z[d:]
        return GX, GY
