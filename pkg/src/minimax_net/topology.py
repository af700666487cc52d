"""Communication graphs, mixing matrices and their spectral quantities."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

TOPOLOGIES = ("complete", "ring", "path", "star", "grid", "custom")
SCHEMES = ("metropolis", "uniform_average")


class TopologyError(ValueError):
    """Invalid graph description or unusable mixing matrix."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph on agents ``0..n-1``; ``edges`` always holds every self-loop."""

    n: int
    edges: frozenset[tuple[int, int]]
    connected: bool
    kind: str = "custom"

    def neighbors(self, i: int) -> list[int]:
        """Neighbors of ``i`` including ``i`` itself."""
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return sorted(out)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for a, b in self.edges:
            if a != b:
                deg[a] += 1
                deg[b] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        """Boolean adjacency with ``True`` on the diagonal."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        for a, b in self.edges:
            adj[a, b] = adj[b, a] = True
        return adj

    @property
    def is_complete(self) -> bool:
        return len(self.edges) == self.n * (self.n + 1) // 2


def _normalize_edges(n: int, pairs: Iterable[Sequence[int]]) -> frozenset[tuple[int, int]]:
    edges = {(i, i) for i in range(n)}
    for pair in pairs:
        if len(pair) != 2:
            raise TopologyError(f"edge {tuple(pair)!r} must have exactly two endpoints")
        a, b = int(pair[0]), int(pair[1])
        if not (0 <= a < n and 0 <= b < n):
            raise TopologyError(f"edge ({a}, {b}) references an agent outside 0..{n - 1}")
        edges.add((min(a, b), max(a, b)))
    return frozenset(edges)


def _is_connected(n: int, edges: frozenset[tuple[int, int]]) -> bool:
    if n == 1:
        return True
    rows = [a for a, _ in edges]
    cols = [b for _, b in edges]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


def build_graph(
    kind: str,
    n: int | None = None,
    *,
    rows: int | None = None,
    cols: int | None = None,
    edges: Iterable[Sequence[int]] | None = None,
) -> Graph:
    """Build one of the standard topologies (or a custom edge list) on ``n`` agents.

    ``grid`` takes ``rows`` and ``cols`` (``n`` defaults to ``rows * cols``);
    ``custom`` takes ``edges`` as 0-indexed pairs. Self-loops are always added.
    """
    kind = kind.lower()
    if kind not in TOPOLOGIES:
        raise TopologyError(f"unknown topology {kind!r}; expected one of {TOPOLOGIES}")
    if kind == "grid":
        if rows is None or cols is None:
            raise TopologyError("grid topology needs rows and cols")
        if n is None:
            n = rows * cols
        if rows * cols != n:
            raise TopologyError(f"grid {rows}x{cols} does not have {n} agents")
    if n is None or n < 1:
        raise TopologyError(f"agent count must be positive, got {n}")

    if kind == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "ring":
        pairs = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    elif kind == "path":
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        pairs = [(0, i) for i in range(1, n)]
    elif kind == "grid":
        pairs = []
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    pairs.append((k, k + 1))
                if r + 1 < rows:
                    pairs.append((k, k + cols))
    else:
        if edges is None:
            raise TopologyError("custom topology needs an edge list")
        pairs = list(edges)

    edge_set = _normalize_edges(n, pairs)
    return Graph(n=n, edges=edge_set, connected=_is_connected(n, edge_set), kind=kind)


def parse_edge_list(text: str) -> list[tuple[int, int]]:
    """Parse ``i j`` lines (0-indexed); blank lines and ``#`` comments are skipped."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"edge list line {lineno}: expected 'i j', got {raw!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise TopologyError(f"edge list line {lineno}: non-integer endpoint in {raw!r}") from exc
    return pairs


def load_edge_list(path: str | Path, n: int | None = None) -> Graph:
    """Read a custom graph from an edge-list file; ``n`` defaults to max index + 1."""
    pairs = parse_edge_list(Path(path).read_text())
    if n is None:
        n = 1 + max((max(p) for p in pairs), default=0)
    return build_graph("custom", n, edges=pairs)


def spectral_norm_deviation(W: np.ndarray, tol: float = 1e-12, max_iter: int | None = None) -> float:
    """Largest singular value of ``W - 11^T/n`` via deflated power iteration.

    For symmetric ``W`` this is the second-largest eigenvalue magnitude. The
    iteration runs on the square of the deflated matrix so that eigenvalue
    pairs of equal magnitude and opposite sign do not stall it.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if n == 1:
        return 0.0
    M = W - np.full((n, n), 1.0 / n)
    if max_iter is None:
        max_iter = 10 * n * n
    v = np.random.default_rng(12345).standard_normal(n)
    v -= v.mean()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    v /= norm
    est = 0.0
    for _ in range(max_iter):
        w = M @ (M @ v)
        w -= w.mean()
        new_norm = np.linalg.norm(w)
        if new_norm == 0.0:
            return 0.0
        new_est = float(np.sqrt(v @ w))
        v = w / new_norm
        if abs(new_est - est) <= tol * max(1.0, new_est):
            est = new_est
            break
        est = new_est
    # one Rayleigh refinement on M^T M at the converged vector
    return float(np.sqrt(max(v @ (M.T @ (M @ v)), 0.0)))


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly-stochastic weights on a connected graph."""

    W: np.ndarray
    lam: float
    graph: Graph
    scheme: str
    _off: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.lam

    @property
    def one_minus_lam_sq(self) -> float:
        return (1.0 - self.lam) * (1.0 + self.lam)

    def mix(self, V: np.ndarray) -> np.ndarray:
        """Return ``W @ V`` evaluated as ``v_i + sum_j w_ij (v_j - v_i)``.

        Identical to the plain product for row-stochastic ``W``, and keeps
        consensual rows exactly unchanged in floating point.
        """
        if self.n == 1:
            return V + 0.0
        diff = V[None, :, :] - V[:, None, :]
        return V + np.einsum("ij,ijk->ik", self._off, diff)

    def edge_count(self) -> int:
        """Number of undirected links excluding self-loops."""
        return sum(1 for a, b in self.graph.edges if a != b)


def build_mixing_matrix(graph: Graph, scheme: str = "metropolis") -> MixingMatrix:
    """Metropolis or uniform (max-degree) weights for a connected graph.

    Metropolis: ``w_ij = 1 / (1 + max(deg_i, deg_j))`` on links, with degrees
    counted without self-loops. ``uniform_average`` puts ``1 / (1 + max_deg)``
    on every link, which is ``11^T / n`` on the complete graph. The diagonal
    absorbs the remaining mass of each row.
    """
    if scheme not in SCHEMES:
        raise TopologyError(f"unknown weight scheme {scheme!r}; expected one of {SCHEMES}")
    if not graph.connected:
        raise TopologyError("graph is disconnected; the mixing matrix would have lambda = 1")
    n = graph.n
    deg = graph.degrees()
    if scheme == "uniform_average" and graph.is_complete:
        W = np.full((n, n), 1.0 / n)
    else:
        W = np.zeros((n, n))
        d_max = int(deg.max()) if n > 1 else 0
        for a, b in graph.edges:
            if a == b:
                continue
            if scheme == "metropolis":
                w = 1.0 / (1.0 + max(deg[a], deg[b]))
            else:
                w = 1.0 / (1.0 + d_max)
            W[a, b] = W[b, a] = w
        W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    W.setflags(write=False)
    off = W.copy()
    off[np.diag_indices(n)] = 0.0
    off.setflags(write=False)
    lam = spectral_norm_deviation(W)
    if lam >= 1.0 - 1e-14:
        raise TopologyError(f"lambda = {lam} is not below one")
    return MixingMatrix(W=W, lam=lam, graph=graph, scheme=scheme, _off=off)


def mixing_from_config(kind: str, n: int, scheme: str = "metropolis", **kwargs) -> MixingMatrix:
    """Shortcut: ``build_mixing_matrix(build_graph(kind, n, **kwargs), scheme)``."""
    return build_mixing_matrix(build_graph(kind, n, **kwargs), scheme)
