"""Wasserstein-robust logistic regression (penalized l2 attack on each sample)."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.special import expit

from .base import BestResponseError, ProblemError, ProblemInstance, project_balls_rows


def _softplus(u):
    return np.logaddexp(0.0, u)


class RobustLogisticWRM(ProblemInstance):
    """``f_i(x, y_i) = (1/m_i) sum_j [logistic(x; y_ij) - gamma ||y_ij - xi_ij||^2]``.

    ``y_ij`` is the adversarial copy of the features of sample ``j`` (labels
    are fixed) and stays within ``radius`` of the clean features. Inside the
    loss, ``x`` is radially clipped to ``||x|| <= x_cap``; on that region the
    per-sample curvature of the loss in ``y`` is at most ``x_cap**2 / 4``,
    which certifies ``mu = (2 gamma - x_cap**2 / 4) / max_i m_i``.
    """

    name = "logistic_wrm"

    def __init__(self, features, labels, gamma: float = 1.0, radius: float = 0.5, x_cap: float = 2.0):
        feats = [np.atleast_2d(np.asarray(f, dtype=float)) for f in features]
        labs = [np.asarray(l, dtype=float).ravel() for l in labels]
        if not feats or len(feats) != len(labs):
            raise ProblemError("need one (features, labels) pair per agent")
        p = feats[0].shape[1]
        for i, (f, l) in enumerate(zip(feats, labs)):
            if f.shape[1] != p:
                raise ProblemError(f"agent {i}: feature dimension {f.shape[1]} != {p}")
            if f.shape[0] == 0 or f.shape[0] != l.shape[0]:
                raise ProblemError(f"agent {i}: needs a label for each of at least one sample")
            if not np.all(np.isin(l, (-1.0, 1.0))):
                raise ProblemError(f"agent {i}: labels must be +1 or -1")
        if not gamma > 0 or not x_cap > 0 or radius < 0:
            raise ProblemError("gamma and x_cap must be positive and radius nonnegative")

        self.n = len(feats)
        self.p = self.d = p
        self.m = np.array([f.shape[0] for f in feats])
        self.dims = tuple(int(mi) * p for mi in self.m)
        self.gamma, self.radius, self.x_cap = float(gamma), float(radius), float(x_cap)
        self.xi = np.vstack(feats)
        self.labels = np.concatenate(labs)
        self.owner = np.repeat(np.arange(self.n), self.m)
        self.weight = 1.0 / self.m[self.owner]
        self.starts = np.concatenate([[0], np.cumsum(self.m)[:-1]])

        self.mu = float((2.0 * gamma - x_cap**2 / 4.0) / self.m.max())
        if self.mu <= 0:
            raise ProblemError(
                f"gamma={gamma} does not certify strong concavity for x_cap={x_cap}: "
                f"need 2*gamma > x_cap**2/4"
            )
        y_norm = np.linalg.norm(self.xi, axis=1) + radius
        self.L = float(np.max((x_cap**2 + y_norm**2) / 4.0 + 1.0) + 2.0 * gamma / self.m.min())
        self.D = 2.0 * radius * float(np.sqrt(self.m.max()))
        self._radii = np.full(self.xi.shape[0], radius)

    @classmethod
    def random(cls, n=4, m=2, p=2, seed=0, gamma=1.0, radius=0.5, x_cap=2.0, flip=0.25, shift=0.5):
        """Seeded toy data: noisy linear labels with agent-specific feature shifts."""
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(p)
        w /= np.linalg.norm(w)
        feats, labs = [], []
        for i in range(n):
            f = rng.standard_normal((m, p)) + shift * rng.standard_normal(p)
            lab = np.where(f @ w >= 0, 1.0, -1.0)
            flips = rng.random(m) < flip
            lab[flips] *= -1.0
            feats.append(f)
            labs.append(lab)
        return cls(feats, labs, gamma=gamma, radius=radius, x_cap=x_cap)

    @classmethod
    def from_csv(cls, paths, **kwargs) -> "RobustLogisticWRM":
        """One CSV per agent with rows ``label,feat_1,...,feat_p`` (a header row is skipped)."""
        feats, labs = [], []
        for path in paths:
            rows = []
            with open(Path(path), newline="") as fh:
                for k, row in enumerate(csv.reader(fh)):
                    if not row:
                        continue
                    try:
                        rows.append([float(v) for v in row])
                    except ValueError:
                        if k == 0:
                            continue
                        raise ProblemError(f"{path}: non-numeric row {k + 1}")
            arr = np.asarray(rows, dtype=float)
            if arr.ndim != 2 or arr.shape[1] < 2:
                raise ProblemError(f"{path}: expected label plus at least one feature per row")
            labs.append(arr[:, 0])
            feats.append(arr[:, 1:])
        return cls(feats, labs, **kwargs)

    # -- helpers ------------------------------------------------------------

    def _clip(self, x):
        nrm = np.linalg.norm(x)
        if nrm <= self.x_cap:
            return x, None
        return self.x_cap * x / nrm, nrm

    def _clip_rows(self, X):
        nrm = np.linalg.norm(X, axis=1)
        scale = np.where(nrm > self.x_cap, self.x_cap / np.maximum(nrm, 1e-300), 1.0)
        return X * scale[:, None], nrm

    def _clip_vjp_rows(self, X, nrm, G):
        """Apply the (symmetric) Jacobian of the radial clip to rows of ``G``."""
        out = G.copy()
        over = nrm > self.x_cap
        if np.any(over):
            u = X[over] / nrm[over, None]
            g = G[over]
            out[over] = (self.x_cap / nrm[over, None]) * (g - np.einsum("ij,ij->i", u, g)[:, None] * u)
        return out

    def _sample_terms(self, Xs, Ys):
        """Per-sample (loss, margin weight) for per-sample clipped ``x`` rows."""
        u = -self.labels * np.einsum("ij,ij->i", Xs, Ys)
        return _softplus(u), expit(u)

    def _rows(self, i):
        a = int(self.starts[i])
        return slice(a, a + int(self.m[i]))

    # -- per-agent contract -------------------------------------------------

    def value(self, i, x, y_i):
        rows = self._rows(i)
        xc, _ = self._clip(np.asarray(x, float))
        Yi = np.asarray(y_i, float).reshape(-1, self.p)
        loss = _softplus(-self.labels[rows] * (Yi @ xc))
        pen = self.gamma * np.sum((Yi - self.xi[rows]) ** 2, axis=1)
        return float(np.mean(loss - pen))

    def value_batch(self, i, x, Ys):
        rows = self._rows(i)
        xc, _ = self._clip(np.asarray(x, float))
        Yr = Ys.reshape(Ys.shape[0], -1, self.p)
        margins = -self.labels[rows] * (Yr @ xc)
        pen = self.gamma * np.sum((Yr - self.xi[rows]) ** 2, axis=2)
        return np.mean(_softplus(margins) - pen, axis=1)

    def grad_x(self, i, x, y_i):
        GX, _ = self.grads(np.asarray(x, float)[None, :], self._embed(i, y_i), only=i)
        return GX[0]

    def grad_y(self, i, x, y_i):
        _, GY = self.grads(np.asarray(x, float)[None, :], self._embed(i, y_i), only=i)
        return GY

    def _embed(self, i, y_i):
        return np.asarray(y_i, float).ravel()

    def project(self, i, v):
        rows = self._rows(i)
        V = np.asarray(v, float).reshape(-1, self.p)
        return project_balls_rows(V, self.xi[rows], self._radii[rows]).reshape(-1)

    def ball_blocks(self, i):
        rows = self._rows(i)
        return [
            (slice(k * self.p, (k + 1) * self.p), self.xi[rows][k], self.radius)
            for k in range(int(self.m[i]))
        ]

    # -- stacked forms --------------------------------------------------------

    def values(self, X, Y):
        Xc, _ = self._clip_rows(X)
        Ys = Y.reshape(-1, self.p)
        loss, _ = self._sample_terms(Xc[self.owner], Ys)
        pen = self.gamma * np.sum((Ys - self.xi) ** 2, axis=1)
        return np.add.reduceat(self.weight * (loss - pen), self.starts)

    def grads(self, X, Y, only: int | None = None):
        if only is not None:
            rows = self._rows(only)
            xc, nrm = self._clip_rows(X)
            Ys = Y.reshape(-1, self.p)
            lab = self.labels[rows]
            u = -lab * (Ys @ xc[0])
            q = expit(u)
            w = 1.0 / self.m[only]
            gx_c = (w * (-lab * q)[:, None] * Ys).sum(axis=0, keepdims=True)
            gx = self._clip_vjp_rows(X, nrm, gx_c)[0]
            gy = w * ((-lab * q)[:, None] * xc[0] - 2.0 * self.gamma * (Ys - self.xi[rows]))
            return gx[None, :], gy.reshape(-1)
        Xc, nrm = self._clip_rows(X)
        Xs = Xc[self.owner]
        Ys = Y.reshape(-1, self.p)
        _, q = self._sample_terms(Xs, Ys)
        coef = self.weight * (-self.labels * q)
        GXc = np.add.reduceat(coef[:, None] * Ys, self.starts, axis=0)
        GX = self._clip_vjp_rows(X, nrm, GXc)
        GY = coef[:, None] * Xs - 2.0 * self.gamma * self.weight[:, None] * (Ys - self.xi)
        return GX, GY.reshape(-1)

    def project_stack(self, Y):
        return project_balls_rows(Y.reshape(-1, self.p), self.xi, self._radii).reshape(-1)

    # -- inner maximization ---------------------------------------------------

    def _ascend(self, X, Y0, tol=1e-12, max_iter=1_000_000):
        """Projected gradient ascent in ``y`` for fixed per-agent ``X``.

        The ``y``-Hessian of sample ``j`` lies in ``[-2 gamma, -(2 gamma - x_cap^2/4)] / m_i``,
        so the per-sample step ``m_i / (2 gamma)`` contracts.
        """
        step = (self.m[self.owner] / (2.0 * self.gamma))[:, None]
        Ys = Y0.reshape(-1, self.p).copy()
        for _ in range(max_iter):
            _, GY = self.grads(X, Ys.reshape(-1))
            Ynew = project_balls_rows(Ys + step * GY.reshape(-1, self.p), self.xi, self._radii)
            move = np.max(np.abs(Ynew - Ys))
            Ys = Ynew
            if move <= tol:
                return Ys.reshape(-1)
        raise BestResponseError(
            f"inner ascent did not converge in {max_iter} iterations; strong concavity certificate failed"
        )

    def best_response(self, i, x):
        return self.best_response_stack(x)[self.slices[i]]

    def best_response_stack(self, x):
        X = np.broadcast_to(np.asarray(x, float), (self.n, self.d))
        return self._ascend(X, self.xi.reshape(-1).copy())
