"""Metric kernels: Micro/Macro-F1, precision@k, purity and NMI."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = ["indicator", "micro_macro_f1", "precision_at_k", "contingency", "purity", "nmi"]


def _as_set(x) -> tuple[int, ...]:
    if isinstance(x, (int, np.integer)):
        return (int(x),)
    return tuple(int(c) for c in x)


def indicator(rows: Sequence, n_classes: int | None = None) -> np.ndarray:
    """Boolean ``(len(rows), n_classes)`` matrix from per-item label collections."""
    sets = [_as_set(r) for r in rows]
    if n_classes is None:
        n_classes = 1 + max((max(s) for s in sets if s), default=-1)
    out = np.zeros((len(sets), n_classes), dtype=bool)
    for i, s in enumerate(sets):
        out[i, list(s)] = True
    return out


def micro_macro_f1(pred: Sequence, truth: Sequence, n_classes: int | None = None) -> tuple[float, float]:
    """Pooled and per-class-averaged F1.

    Each element of ``pred`` / ``truth`` is a class id or a collection of
    class ids.  Classes with no true and no predicted instance are left out
    of the macro average.
    """
    if len(pred) != len(truth):
        raise ValueError("pred and truth differ in length")
    if not len(truth):
        raise ValueError("empty input")
    if n_classes is None:
        both = [*pred, *truth]
        n_classes = indicator(both).shape[1]
    p = indicator(pred, n_classes)
    t = indicator(truth, n_classes)
    tp = np.sum(p & t, axis=0).astype(np.float64)
    fp = np.sum(p & ~t, axis=0).astype(np.float64)
    fn = np.sum(~p & t, axis=0).astype(np.float64)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / denom if denom > 0 else 0.0
    per_denom = 2 * tp + fp + fn
    active = per_denom > 0
    macro = float(np.mean(2 * tp[active] / per_denom[active])) if active.any() else 0.0
    return float(micro), macro


def precision_at_k(scores: np.ndarray, is_true: np.ndarray, ks: Iterable[int]) -> tuple[dict[int, float], list[int]]:
    """Fraction of true candidates among the ``k`` highest scores.

    Ties keep the candidates' input order.  Returns ``({k: precision},
    clamped)``: any ``k`` above the candidate count is evaluated at the
    candidate count and listed in ``clamped``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_true = np.asarray(is_true, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    hits = np.cumsum(is_true[order])
    out, clamped = {}, []
    for k in ks:
        k = int(k)
        if k < 1:
            raise ValueError("k must be >= 1")
        kk = k
        if k > len(scores):
            clamped.append(k)
            kk = len(scores)
        out[k] = float(hits[kk - 1] / kk) if kk else 0.0
    return out, clamped


def contingency(assignments: Sequence, truth: Sequence) -> np.ndarray:
    a = np.asarray(assignments)
    t = np.asarray(truth)
    if a.shape != t.shape:
        raise ValueError("assignments and truth differ in length")
    if not a.size:
        raise ValueError("empty input")
    _, ai = np.unique(a, return_inverse=True)
    _, ti = np.unique(t, return_inverse=True)
    table = np.zeros((ai.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, ti), 1)
    return table


def purity(assignments: Sequence, truth: Sequence) -> float:
    table = contingency(assignments, truth)
    return float(table.max(axis=1).sum() / table.sum())


def nmi(assignments: Sequence, truth: Sequence) -> float:
    """``MI / sqrt(H(C) H(C'))`` in nats; 0 when either side has zero entropy."""
    table = contingency(assignments, truth).astype(np.float64)
    # a single cluster or class has zero entropy; test it structurally, not by float sums
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 0.0
    pij = table / table.sum()
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)
    h_c = -np.sum(pi * np.log(pi))
    h_t = -np.sum(pj * np.log(pj))
    if h_c <= 0 or h_t <= 0:
        return 0.0
    nz = pij > 0
    mi = np.sum(pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz]))
    return float(np.clip(mi / np.sqrt(h_c * h_t), 0.0, 1.0))
