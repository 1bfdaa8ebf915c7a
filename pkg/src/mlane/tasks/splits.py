"""Label files and reproducible train/validation/test splits."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..graph import Graph

__all__ = ["LabelSet", "SplitSpec", "SplitError", "read_labels", "parse_labels", "make_split"]


class SplitError(ValueError):
    pass


@dataclass
class LabelSet:
    """Per-node class ids; an empty tuple marks an unlabelled node."""

    labels: list[tuple[int, ...]]
    class_names: list[str]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def multilabel(self) -> bool:
        return any(len(x) > 1 for x in self.labels)

    def labeled_nodes(self) -> np.ndarray:
        return np.array([i for i, x in enumerate(self.labels) if x], dtype=np.int64)

    def primary(self) -> np.ndarray:
        """First class of each node (``-1`` for unlabelled)."""
        return np.array([x[0] if x else -1 for x in self.labels], dtype=np.int64)

    @classmethod
    def from_single(cls, classes, names=None) -> "LabelSet":
        classes = [int(c) for c in classes]
        k = max(classes) + 1
        return cls([(c,) if c >= 0 else () for c in classes],
                   names or [str(i) for i in range(k)])


def parse_labels(text: str, g: Graph) -> LabelSet:
    """Lines ``node_label class[,class...]``; ``#`` lines are comments."""
    raw: dict[int, list[str]] = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"label line {lineno}: expected 'node class[,class...]', got {line!r}")
        node = g.index.get(parts[0])
        if node is None:
            unknown.append(parts[0])
            continue
        raw.setdefault(node, []).extend(c for c in parts[1].split(",") if c)
    if unknown:
        shown = ", ".join(unknown[:10])
        raise ValueError(f"{len(unknown)} labelled node(s) absent from the graph: {shown}")
    names = sorted({c for cs in raw.values() for c in cs})
    cid = {c: i for i, c in enumerate(names)}
    labels = [tuple(sorted({cid[c] for c in raw.get(v, [])})) for v in range(g.n)]
    return LabelSet(labels, names)


def read_labels(path, g: Graph) -> LabelSet:
    with open(path, encoding="utf-8") as fh:
        return parse_labels(fh.read(), g)


@dataclass
class SplitSpec:
    """Node split (classification / clustering) or edge split (link prediction)."""

    kind: str
    seed: int
    train: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    removed_val: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    removed_test: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    nonedges_val: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    nonedges_test: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    _ARRAYS = ("train", "val", "test", "removed_val", "removed_test", "nonedges_val", "nonedges_test")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed}
        for name in self._ARRAYS:
            out[name] = np.asarray(getattr(self, name)).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SplitSpec":
        kwargs = {"kind": data["kind"], "seed": data["seed"]}
        for name in cls._ARRAYS:
            arr = np.asarray(data.get(name, []), dtype=np.int64)
            kwargs[name] = arr.reshape(-1, 2) if name.startswith(("removed", "nonedges")) else arr
        return cls(**kwargs)

    def digest(self) -> str:
        return hashlib.blake2b(json.dumps(self.to_dict(), sort_keys=True).encode(),
                               digest_size=8).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def removed_edges(self) -> np.ndarray:
        return np.concatenate([self.removed_val, self.removed_test])

    def residual_graph(self, g: Graph) -> Graph:
        return g.subgraph_without(self.removed_edges())


def _stratified_order(nodes: np.ndarray, classes: np.ndarray | None, rng) -> np.ndarray:
    """Permutation of ``nodes`` whose every prefix is close to class-balanced."""
    if classes is None:
        return nodes[rng.permutation(len(nodes))]
    key = np.empty(len(nodes))
    for c in np.unique(classes):
        idx = np.nonzero(classes == c)[0]
        idx = idx[rng.permutation(len(idx))]
        key[idx] = (np.arange(len(idx)) + rng.random(len(idx))) / len(idx)
    return nodes[np.argsort(key, kind="stable")]


def _node_split(kind, labels: LabelSet, fractions, seed) -> SplitSpec:
    fr = np.asarray(fractions, dtype=np.float64)
    if np.any(fr <= 0) or np.any(fr >= 1) or fr.sum() > 1 + 1e-12:
        raise SplitError(f"fractions must lie in (0, 1) and sum to at most 1: {fractions}")
    rng = np.random.default_rng(seed)
    nodes = labels.labeled_nodes()
    classes = None if labels.multilabel else labels.primary()[nodes]
    order = _stratified_order(nodes, classes, rng)
    n = len(order)
    cuts = np.round(np.cumsum(fr) * n).astype(int)
    parts = np.split(order, cuts)
    if kind == "classification":
        train, val = parts[0], parts[1]
        test = np.concatenate(parts[2:])
        return SplitSpec(kind, seed, np.sort(train), np.sort(val), np.sort(test))
    val = parts[0]
    test = np.concatenate(parts[1:])
    return SplitSpec(kind, seed, val=np.sort(val), test=np.sort(test))


def _edge_split(g: Graph, fractions, seed) -> SplitSpec:
    test_frac, val_frac = (list(fractions) + [0.0])[:2]
    if not 0 < test_frac < 1 or not 0 <= val_frac < 1:
        raise SplitError(f"edge fractions must lie in (0, 1): {fractions}")
    rng = np.random.default_rng(seed)
    edges = g.edges()
    m = len(edges)
    n_test = max(1, int(round(test_frac * m)))
    n_val = int(round(val_frac * m)) if val_frac > 0 else 0
    need = n_test + n_val
    deg = g.degree().copy()
    picked = []
    for e in rng.permutation(m):
        u, v = edges[e]
        if deg[u] > 1 and deg[v] > 1:
            deg[u] -= 1
            deg[v] -= 1
            picked.append(e)
            if len(picked) == need:
                break
    if len(picked) < need:
        raise SplitError(
            f"cannot remove {need} of {m} edges while keeping every node's degree >= 1 "
            f"(only {len(picked)} removable)")
    removed = edges[np.array(picked, dtype=np.int64)]
    max_pairs = g.n * (g.n - 1) // 2 - m
    if max_pairs < need:
        raise SplitError(f"graph has only {max_pairs} non-edges, {need} needed")
    chosen: set[tuple[int, int]] = set()
    nonedges = []
    while len(nonedges) < need:
        u, v = rng.integers(0, g.n, size=2)
        if u == v:
            continue
        u, v = (int(u), int(v)) if u < v else (int(v), int(u))
        if (u, v) in chosen or g.has_edge(u, v):
            continue
        chosen.add((u, v))
        nonedges.append((u, v))
    nonedges = np.array(nonedges, dtype=np.int64).reshape(-1, 2)

    def lex(a):
        return a[np.lexsort((a[:, 1], a[:, 0]))] if len(a) else a

    return SplitSpec("linkpred", seed,
                     removed_test=lex(removed[:n_test]), removed_val=lex(removed[n_test:]),
                     nonedges_test=lex(nonedges[:n_test]), nonedges_val=lex(nonedges[n_test:]))


def make_split(kind: str, data, fractions=None, seed: int = 0) -> SplitSpec:
    """Deterministic split for one task kind.

    * ``classification``: ``data`` is a :class:`LabelSet`, ``fractions`` =
      (train, val), the rest is test; default (0.7, 0.1).  Single-label sets
      are stratified by class.
    * ``clustering``: ``fractions`` = (val,), the rest is test; default (0.5,).
    * ``linkpred``: ``data`` is a :class:`Graph`, ``fractions`` = (test, val)
      shares of edges to hide; default (0.1, 0.05).  No node may lose its
      last edge.  An equal number of non-edges is sampled for each part.
    """
    if kind == "classification":
        return _node_split(kind, data, fractions or (0.7, 0.1), seed)
    if kind == "clustering":
        return _node_split(kind, data, fractions or (0.5,), seed)
    if kind == "linkpred":
        return _edge_split(data, fractions or (0.1, 0.05), seed)
    raise ValueError(f"unknown split kind {kind!r}")
