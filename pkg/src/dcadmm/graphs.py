"""Directed interconnection topologies and their mixing matrices.

Edges are stored as ordered pairs ``(i, j)`` meaning agent ``j`` can send to
agent ``i`` (``j`` is an in-neighbor of ``i``). Agents are indexed from 0.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "ConnectivityError",
    "DirectedGraph",
    "WeightMatrix",
    "erdos_renyi_digraph",
    "ring_digraph",
    "complete_digraph",
    "star_digraph",
    "symmetrize",
    "exact_diameter",
    "equal_neighbor_weights",
    "row_equal_neighbor_weights",
    "metropolis_weights",
    "read_edge_list",
    "write_edge_list",
    "read_weights_csv",
    "write_weights_csv",
]

# Dense storage below this size, CSR above.
DENSE_LIMIT = 512


class ConnectivityError(ValueError):
    """Raised when a graph is not strongly connected or cannot be made so."""


def _bfs_depths(n: int, out_neighbors: tuple[tuple[int, ...], ...], source: int) -> np.ndarray:
    depth = np.full(n, -1, dtype=np.int64)
    depth[source] = 0
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in out_neighbors[node]:
            if depth[nxt] < 0:
                depth[nxt] = depth[node] + 1
                queue.append(nxt)
    return depth


def _is_strongly_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    edges = list(edges)
    if not edges:
        return n == 1
    rows, cols = zip(*edges)
    adj = sp.csr_array((np.ones(len(edges)), (cols, rows)), shape=(n, n))
    count, _ = connected_components(adj, directed=True, connection="strong")
    return count == 1


@dataclass(frozen=True)
class DirectedGraph:
    """Strongly connected digraph with a known diameter bound.

    Use :meth:`from_edges` rather than the raw constructor; it validates the
    edge set and fills the neighbor lists.
    """

    n: int
    edges: frozenset[tuple[int, int]]
    in_neighbors: tuple[tuple[int, ...], ...]
    out_neighbors: tuple[tuple[int, ...], ...]
    diameter_bound: int
    diameter: int = field(compare=False)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        diameter_bound: int | None = None,
    ) -> "DirectedGraph":
        if n < 2:
            raise ValueError(f"graph needs n >= 2 agents, got {n}")
        edge_set = frozenset((int(i), int(j)) for i, j in edges)
        for i, j in edge_set:
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) not allowed in the edge set")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        ins: list[list[int]] = [[] for _ in range(n)]
        outs: list[list[int]] = [[] for _ in range(n)]
        for i, j in sorted(edge_set):
            ins[i].append(j)
            outs[j].append(i)
        in_nb = tuple(tuple(sorted(x)) for x in ins)
        out_nb = tuple(tuple(sorted(x)) for x in outs)
        if not _is_strongly_connected(n, edge_set):
            raise ConnectivityError("graph is not strongly connected")
        diam = _diameter_from_out(n, out_nb)
        if diameter_bound is None:
            diameter_bound = diam
        if diameter_bound < diam:
            raise ValueError(f"diameter_bound {diameter_bound} is below the exact diameter {diam}")
        return cls(n, edge_set, in_nb, out_nb, int(diameter_bound), diam)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def with_diameter_bound(self, bound: int) -> "DirectedGraph":
        """Return a copy using a looser diameter bound."""
        return DirectedGraph.from_edges(self.n, self.edges, diameter_bound=bound)

    def adjacency(self, self_loops: bool = False) -> np.ndarray:
        """Boolean matrix ``M`` with ``M[i, j]`` true when ``j`` sends to ``i``."""
        mat = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            mat[i, j] = True
        if self_loops:
            np.fill_diagonal(mat, True)
        return mat

    def in_degree(self) -> np.ndarray:
        return np.array([len(x) for x in self.in_neighbors], dtype=np.int64)

    def out_degree(self) -> np.ndarray:
        return np.array([len(x) for x in self.out_neighbors], dtype=np.int64)

    def is_symmetric(self) -> bool:
        return all((j, i) in self.edges for i, j in self.edges)


def _diameter_from_out(n: int, out_nb: tuple[tuple[int, ...], ...]) -> int:
    best = 0
    for src in range(n):
        depth = _bfs_depths(n, out_nb, src)
        if np.any(depth < 0):
            raise ConnectivityError(f"node unreachable from {src}")
        best = max(best, int(depth.max()))
    return best


def exact_diameter(g: DirectedGraph) -> int:
    """Longest shortest directed path, by BFS from every node."""
    return _diameter_from_out(g.n, g.out_neighbors)


def erdos_renyi_digraph(
    n: int,
    p: float,
    seed: int | np.random.Generator,
    max_tries: int = 1000,
) -> DirectedGraph:
    """Sample ``G(n, p)`` digraphs until one is strongly connected.

    Each ordered pair ``(i, j)``, ``i != j``, is present independently with
    probability ``p``. Raises :class:`ConnectivityError` after ``max_tries``
    rejected samples.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    off_diag = ~np.eye(n, dtype=bool)
    for _ in range(max_tries):
        mask = (rng.random((n, n)) < p) & off_diag
        rows, cols = np.nonzero(mask)
        edges = list(zip(rows.tolist(), cols.tolist()))
        if _is_strongly_connected(n, edges):
            return DirectedGraph.from_edges(n, edges)
    raise ConnectivityError(
        f"connectivity unattainable: no strongly connected G({n}, {p}) sample in {max_tries} tries"
    )


def ring_digraph(n: int) -> DirectedGraph:
    """Directed cycle 0 -> 1 -> ... -> n-1 -> 0."""
    if n < 2:
        raise ValueError(f"ring needs n >= 2, got {n}")
    return DirectedGraph.from_edges(n, [((j + 1) % n, j) for j in range(n)])


def complete_digraph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, j) for i in range(n) for j in range(n) if i != j])


def star_digraph(n: int, hub: int = 0) -> DirectedGraph:
    """Hub linked in both directions to every other node."""
    edges = []
    for leaf in range(n):
        if leaf != hub:
            edges += [(leaf, hub), (hub, leaf)]
    return DirectedGraph.from_edges(n, edges)


def symmetrize(g: DirectedGraph) -> DirectedGraph:
    """Undirected version of ``g``: every link usable in both directions."""
    edges = set(g.edges) | {(j, i) for i, j in g.edges}
    return DirectedGraph.from_edges(g.n, edges)


@dataclass(frozen=True)
class WeightMatrix:
    """Nonnegative mixing matrix aligned to a :class:`DirectedGraph`.

    ``entries[i, j]`` is the weight agent ``i`` applies to the value received
    from ``j``. Stored densely for ``n <= 512`` and as CSR beyond.
    """

    entries: np.ndarray | sp.csr_array
    graph: DirectedGraph

    @property
    def n(self) -> int:
        return self.graph.n

    def dense(self) -> np.ndarray:
        if sp.issparse(self.entries):
            return self.entries.toarray()
        return np.asarray(self.entries)

    def column_sum_error(self) -> float:
        sums = np.asarray(self.entries.sum(axis=0)).ravel()
        return float(np.max(np.abs(sums - 1.0)))

    def row_sum_error(self) -> float:
        sums = np.asarray(self.entries.sum(axis=1)).ravel()
        return float(np.max(np.abs(sums - 1.0)))

    def is_column_stochastic(self, tol: float = 1e-12) -> bool:
        return self.dense().min() >= 0.0 and self.column_sum_error() <= tol

    def is_row_stochastic(self, tol: float = 1e-12) -> bool:
        return self.dense().min() >= 0.0 and self.row_sum_error() <= tol

    def is_doubly_stochastic(self, tol: float = 1e-12) -> bool:
        return self.is_column_stochastic(tol) and self.is_row_stochastic(tol)

    def support_matches_graph(self) -> bool:
        """True when ``p_ij > 0`` exactly on the diagonal and the edges."""
        return bool(np.array_equal(self.dense() > 0, self.graph.adjacency(self_loops=True)))

    def is_primitive(self) -> bool:
        """Wielandt test: some power of at most n^2 - 2n + 2 is entrywise positive."""
        n = self.n
        support = (self.dense() > 0).astype(np.int64)
        exponent = n * n - 2 * n + 2
        result = np.eye(n, dtype=np.int64)
        base = support
        while exponent:
            if exponent & 1:
                result = np.minimum(result @ base, 1)
            base = np.minimum(base @ base, 1)
            exponent >>= 1
        return bool(result.min() > 0)


def _wrap(mat: np.ndarray, g: DirectedGraph) -> WeightMatrix:
    if g.n > DENSE_LIMIT:
        return WeightMatrix(sp.csr_array(mat), g)
    return WeightMatrix(mat, g)


def equal_neighbor_weights(g: DirectedGraph) -> WeightMatrix:
    """Column-stochastic out-degree rule: column j holds 1/(1 + outdeg(j))."""
    mat = g.adjacency(self_loops=True).astype(float)
    mat /= mat.sum(axis=0, keepdims=True)
    return _wrap(mat, g)


def row_equal_neighbor_weights(g: DirectedGraph) -> WeightMatrix:
    """Row-stochastic in-degree rule: row i holds 1/(1 + indeg(i))."""
    mat = g.adjacency(self_loops=True).astype(float)
    mat /= mat.sum(axis=1, keepdims=True)
    return _wrap(mat, g)


def metropolis_weights(g: DirectedGraph) -> WeightMatrix:
    """Symmetric doubly-stochastic Metropolis-Hastings weights.

    Requires an undirected (symmetric) graph.
    """
    if not g.is_symmetric():
        raise ValueError("Metropolis weights need a symmetric graph; call symmetrize() first")
    deg = g.in_degree()
    mat = np.zeros((g.n, g.n))
    for i, j in g.edges:
        mat[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    mat[np.diag_indices(g.n)] = 1.0 - mat.sum(axis=1)
    return _wrap(mat, g)


def write_edge_list(g: DirectedGraph, path: str | Path) -> None:
    """First line ``n m``, then one ``src dst`` line per directed link."""
    lines = [f"{g.n} {g.num_edges}"]
    lines += [f"{j} {i}" for i, j in sorted(g.edges, key=lambda e: (e[1], e[0]))]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path, diameter_bound: int | None = None) -> DirectedGraph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    n, m = int(rows[0][0]), int(rows[0][1])
    links = [(int(dst), int(src)) for src, dst in rows[1:]]
    if len(links) != m:
        raise ValueError(f"edge list header promises {m} edges, found {len(links)}")
    return DirectedGraph.from_edges(n, links, diameter_bound=diameter_bound)


def write_weights_csv(w: WeightMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in w.dense():
            writer.writerow([repr(float(x)) for x in row])


def read_weights_csv(path: str | Path, graph: DirectedGraph) -> WeightMatrix:
    with open(path, newline="") as fh:
        mat = np.array([[float(x) for x in row] for row in csv.reader(fh)])
    if mat.shape != (graph.n, graph.n):
        raise ValueError(f"weights CSV has shape {mat.shape}, expected {(graph.n, graph.n)}")
    return _wrap(mat, graph)
