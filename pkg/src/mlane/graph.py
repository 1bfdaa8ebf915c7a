"""Undirected graphs in CSR form, edge-list I/O and BFS distance fields."""
from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from . import _kernels
from ._kernels import UNREACHED

__all__ = [
    "UNREACHED",
    "Graph",
    "DistanceField",
    "NeighborPartition",
    "DistanceCache",
    "EdgeListError",
    "parse_edge_list",
    "read_edge_list",
    "bfs_distances",
    "partition_neighbors",
]


class EdgeListError(ValueError):
    """Malformed edge-list input."""


class Graph:
    """Simple undirected graph with dense ids ``0..n-1``.

    Neighbour lists are sorted and stored in CSR arrays (``indptr``,
    ``indices``).  ``labels[i]`` is the external label of node ``i``.
    Instances are treated as immutable.
    """

    def __init__(self, indptr: np.ndarray, indices: np.ndarray, labels: Sequence[str]):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("node labels must be unique")
        self.n = len(self.labels)
        self.edge_count = int(self.indices.shape[0] // 2)
        self.self_loops_dropped = 0
        self._distances: DistanceCache | None = None

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[int, int]],
        n: int | None = None,
        labels: Sequence[Hashable] | None = None,
    ) -> "Graph":
        """Build from integer edge pairs; self-loops and duplicates are dropped."""
        arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if n is None:
            n = int(arr.max()) + 1 if arr.size else 0
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError("edge endpoint outside [0, n)")
        loops = arr[:, 0] == arr[:, 1]
        arr = arr[~loops]
        both = np.concatenate([arr, arr[:, ::-1]])
        if both.size:
            both = np.unique(both, axis=0)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        if labels is None:
            labels = [str(i) for i in range(n)]
        g = cls(indptr, both[:, 1].copy(), [str(x) for x in labels])
        g.self_loops_dropped = int(loops.sum())
        return g

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(v) for v in range(self.n)]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        """(edge_count, 2) array of ``u < v`` pairs in lexicographic order."""
        src = np.repeat(np.arange(self.n), self.degree())
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < nb.shape[0] and nb[k] == v)

    def subgraph_without(self, removed: np.ndarray) -> "Graph":
        """Same node set, with the given ``(u, v)`` edges deleted."""
        removed = {(int(min(u, v)), int(max(u, v))) for u, v in np.asarray(removed).reshape(-1, 2)}
        kept = [tuple(e) for e in self.edges().tolist() if tuple(e) not in removed]
        return Graph.from_edges(kept, n=self.n, labels=self.labels)

    @property
    def distances(self) -> "DistanceCache":
        if self._distances is None:
            self._distances = DistanceCache(self)
        return self._distances

    def to_edge_list(self) -> str:
        return "".join(f"{self.labels[u]} {self.labels[v]}\n" for u, v in self.edges().tolist())

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edge_count={self.edge_count})"


def parse_edge_list(text: str) -> Graph:
    """Parse whitespace-separated ``u v`` lines; ``#`` starts a comment line.

    Labels get dense ids in order of first appearance.
    """
    index: dict[str, int] = {}
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"line {lineno}: expected 2 tokens, got {len(parts)}: {raw!r}")
        ids = []
        for tok in parts:
            if tok not in index:
                index[tok] = len(index)
            ids.append(index[tok])
        pairs.append(ids)
    if not index:
        raise EdgeListError("edge list is empty")
    g = Graph.from_edges(pairs, n=len(index), labels=list(index))
    if g.self_loops_dropped:
        warnings.warn(f"dropped {g.self_loops_dropped} self-loop(s)", stacklevel=2)
    return g


def read_edge_list(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


@dataclass(frozen=True)
class DistanceField:
    """Hop distances from ``source``; unreachable nodes hold ``UNREACHED``."""

    source: int
    dist: np.ndarray
    max_dist: int


@dataclass(frozen=True)
class NeighborPartition:
    forward: np.ndarray
    same: np.ndarray
    backward: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return len(self.forward), len(self.same), len(self.backward)


def bfs_distances(g: Graph, source: int) -> DistanceField:
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} outside [0, {g.n})")
    dist = np.empty(g.n, dtype=np.int32)
    max_d = _kernels.bfs(g.indptr, g.indices, source, dist)
    dist.flags.writeable = False
    return DistanceField(int(source), dist, int(max_d))


def partition_neighbors(g: Graph, field: DistanceField, current: int) -> NeighborPartition:
    """Split the neighbours of ``current`` by distance delta (+1, 0, -1)."""
    d = field.dist[current]
    if d == UNREACHED:
        raise ValueError(f"node {current} is not reachable from source {field.source}")
    nb = g.neighbors(current)
    delta = field.dist[nb] - d
    return NeighborPartition(nb[delta == 1], nb[delta == 0], nb[delta == -1])


class DistanceCache:
    """Lazily memoised BFS fields of one graph.

    Concurrent misses on the same source may both run BFS; the results are
    identical, so whichever lands last wins.
    """

    def __init__(self, g: Graph):
        self.graph = g
        self._fields: dict[int, DistanceField] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self._matrix: np.ndarray | None = None

    def __getitem__(self, source: int) -> DistanceField:
        field = self._fields.get(source)
        if field is not None:
            with self._lock:
                self.hits += 1
            return field
        field = bfs_distances(self.graph, source)
        with self._lock:
            self.misses += 1
            self._fields[source] = field
        return field

    def __len__(self) -> int:
        return len(self._fields)

    def clear(self) -> None:
        with self._lock:
            self._fields.clear()
            self._matrix = None
            self.hits = self.misses = 0

    def max_dists(self) -> np.ndarray:
        return np.array([self[v].max_dist for v in range(self.graph.n)], dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """Dense (n, n) distance matrix, row ``v`` = field of source ``v``."""
        if self._matrix is None:
            n = self.graph.n
            dtype = np.int16 if n < np.iinfo(np.int16).max else np.int32
            mat = np.empty((n, n), dtype=dtype)
            for v in range(n):
                mat[v] = self[v].dist
            mat.flags.writeable = False
            self._matrix = mat
        return self._matrix
