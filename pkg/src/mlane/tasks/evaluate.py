"""Downstream evaluators; each returns a :class:`TaskReport` whose ``reward``
is the metric the meta-learner maximises."""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from ..graph import Graph
from .logreg import OneVsRestLogReg
from .metrics import indicator, micro_macro_f1, nmi, precision_at_k, purity
from .splits import LabelSet, SplitSpec, make_split

__all__ = [
    "REPORT_FORMAT_VERSION",
    "TaskReport",
    "eval_classification",
    "eval_link_prediction",
    "eval_clustering",
    "kmeans",
    "ClassificationTask",
    "LinkPredictionTask",
    "ClusteringTask",
    "make_task",
]

REPORT_FORMAT_VERSION = 1


@dataclass
class TaskReport:
    task: str
    reward: float
    metrics: dict
    split_seed: int | None
    split_digest: str | None = None
    evaluated_on: str = "test"
    wall_time: float | None = None
    warnings: list[str] = field(default_factory=list)
    format_version: int = REPORT_FORMAT_VERSION

    def to_dict(self, timing: bool = True) -> dict:
        out = asdict(self)
        if not timing:
            out["wall_time"] = None
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2)


def _embedding_matrix(z) -> np.ndarray:
    return getattr(z, "input_vectors", z)


def _pick(split: SplitSpec, on: str):
    if on not in ("test", "validation"):
        raise ValueError("evaluate on 'test' or 'validation'")
    return split.test if on == "test" else split.val


def eval_classification(z, labels: LabelSet, split: SplitSpec, on: str = "test",
                        l2: float = 1e-4) -> TaskReport:
    """One-vs-rest logistic regression on ``split.train``, F1 on ``on``.

    Multi-label nodes get their top-k classes with k = true label count;
    single-label nodes get the arg-max.  Reward = Macro-F1.
    """
    t0 = time.perf_counter()
    z = _embedding_matrix(z)
    notes = []
    train = split.train
    target = _pick(split, on)
    if not len(train) or not len(target):
        raise ValueError("train and evaluation node sets must be non-empty")
    y = indicator([labels.labels[v] for v in train], labels.n_classes)
    seen = y.any(axis=0)
    if not seen.all():
        absent = [labels.class_names[c] for c in np.nonzero(~seen)[0]]
        notes.append(f"classes absent from training split score 0: {absent}")
        warnings.warn(notes[-1], stacklevel=2)
    clf = OneVsRestLogReg(l2=l2).fit(z[train], y[:, seen])
    scores = np.full((len(target), labels.n_classes), -np.inf)
    scores[:, seen] = clf.decision_function(z[target])
    truth = [labels.labels[v] for v in target]
    if labels.multilabel:
        order = np.argsort(-scores, axis=1, kind="stable")
        pred = [tuple(order[i, :max(1, len(t))]) for i, t in enumerate(truth)]
    else:
        pred = [(int(c),) for c in np.argmax(scores, axis=1)]
    micro, macro = micro_macro_f1(pred, truth, labels.n_classes)
    return TaskReport("classification", macro, {"micro_f1": micro, "macro_f1": macro},
                      split.seed, split.digest(), on, time.perf_counter() - t0, notes)


def _candidates(split: SplitSpec, on: str, n: int):
    if on == "test":
        pos, neg = split.removed_test, split.nonedges_test
    elif on == "validation":
        pos, neg = split.removed_val, split.nonedges_val
    else:
        raise ValueError("evaluate on 'test' or 'validation'")
    pairs = np.concatenate([pos, neg]).astype(np.int64)
    is_true = np.concatenate([np.ones(len(pos), bool), np.zeros(len(neg), bool)])
    order = np.argsort(pairs[:, 0] * n + pairs[:, 1], kind="stable")
    return pairs[order], is_true[order]


def eval_link_prediction(z, split: SplitSpec, ks: Sequence[int] = (10, 100),
                         on: str = "test") -> TaskReport:
    """Rank hidden edges and sampled non-edges by inner product.

    Ties are broken by pair id ``u * n + v``.  Reward = precision@max(ks).
    """
    t0 = time.perf_counter()
    z = _embedding_matrix(z)
    pairs, is_true = _candidates(split, on, z.shape[0])
    if not is_true.any():
        raise ValueError("no hidden edges in this split")
    scores = np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])
    prec, clamped = precision_at_k(scores, is_true, ks)
    notes = []
    if clamped:
        notes.append(f"k clamped to candidate count {len(scores)}: {clamped}")
        warnings.warn(notes[-1], stacklevel=2)
    metrics = {"precision_at_k": {str(k): v for k, v in prec.items()},
               "candidates": int(len(scores)), "clamped_ks": clamped}
    return TaskReport("linkpred", prec[max(int(k) for k in ks)], metrics, split.seed,
                      split.digest(), on, time.perf_counter() - t0, notes)


def kmeans(x: np.ndarray, k: int, seed: int, restarts: int = 10) -> np.ndarray:
    """Lloyd's K-means, k-means++ seeding, best of ``restarts`` by inertia."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(n_clusters=k, init="k-means++", n_init=restarts, algorithm="lloyd",
                    random_state=seed)
        return km.fit_predict(np.asarray(x, dtype=np.float64))


def eval_clustering(z, labels: LabelSet, k_clusters: int, seed: int = 0,
                    split: SplitSpec | None = None, on: str = "test") -> TaskReport:
    """K-means on all labelled nodes, purity / NMI on the ``on`` subset.

    Without a split every labelled node is scored.  Reward = NMI.
    """
    t0 = time.perf_counter()
    if k_clusters < 2:
        raise ValueError("k_clusters must be >= 2")
    if labels.multilabel:
        raise ValueError("clustering needs single-label nodes")
    z = _embedding_matrix(z)
    nodes = labels.labeled_nodes()
    assign = np.full(z.shape[0], -1)
    assign[nodes] = kmeans(z[nodes], k_clusters, seed)
    target = nodes if split is None else _pick(split, on)
    truth = labels.primary()[target]
    pur = purity(assign[target], truth)
    score = nmi(assign[target], truth)
    return TaskReport("clustering", score, {"purity": pur, "nmi": score},
                      None if split is None else split.seed,
                      None if split is None else split.digest(), on,
                      time.perf_counter() - t0)


class _Task:
    """Binds a split to an evaluator.

    ``reward`` scores on the validation part; ``report`` on the test part.
    With ``strict`` both use the test part (single-split protocol).
    """

    kind = ""

    def __init__(self, split: SplitSpec, strict: bool = False):
        self.split = split
        self.strict = strict

    def embedding_graph(self, g: Graph) -> Graph:
        return g

    def _evaluate(self, z, on: str) -> TaskReport:
        raise NotImplementedError

    def reward(self, z) -> TaskReport:
        return self._evaluate(z, "test" if self.strict else "validation")

    def report(self, z) -> TaskReport:
        return self._evaluate(z, "test")


class ClassificationTask(_Task):
    kind = "classification"

    def __init__(self, labels: LabelSet, split: SplitSpec, strict: bool = False):
        super().__init__(split, strict)
        self.labels = labels

    def _evaluate(self, z, on):
        return eval_classification(z, self.labels, self.split, on)


class LinkPredictionTask(_Task):
    kind = "linkpred"

    def __init__(self, split: SplitSpec, ks: Sequence[int] = (10, 100), strict: bool = False):
        super().__init__(split, strict)
        self.ks = tuple(ks)
        self._residual: tuple[int, Graph] | None = None

    def embedding_graph(self, g: Graph) -> Graph:
        if self._residual is None or self._residual[0] != id(g):
            self._residual = (id(g), self.split.residual_graph(g))
        return self._residual[1]

    def _evaluate(self, z, on):
        return eval_link_prediction(z, self.split, self.ks, on)


class ClusteringTask(_Task):
    kind = "clustering"

    def __init__(self, labels: LabelSet, split: SplitSpec, k_clusters: int | None = None,
                 seed: int = 0, strict: bool = False):
        super().__init__(split, strict)
        self.labels = labels
        self.k_clusters = k_clusters or labels.n_classes
        self.seed = seed

    def _evaluate(self, z, on):
        split = None if self.strict else self.split
        return eval_clustering(z, self.labels, self.k_clusters, self.seed, split, on)


def make_task(kind: str, g: Graph, labels: LabelSet | None, seed: int,
              ks: Sequence[int] = (10, 100), strict: bool = False, fractions=None):
    """Split + task object for ``kind``; splits depend only on ``seed``."""
    if kind == "classification":
        if labels is None:
            raise ValueError("classification needs labels")
        return ClassificationTask(labels, make_split(kind, labels, fractions, seed), strict)
    if kind == "clustering":
        if labels is None:
            raise ValueError("clustering needs labels")
        return ClusteringTask(labels, make_split(kind, labels, fractions, seed), seed=seed,
                              strict=strict)
    if kind == "linkpred":
        return LinkPredictionTask(make_split(kind, g, fractions, seed), ks, strict)
    raise ValueError(f"unknown task {kind!r}")
