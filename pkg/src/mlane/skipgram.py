"""SkipGram with negative sampling, trained by plain SGD on walk corpora."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import _kernels
from .walker import Corpus

__all__ = [
    "SkipGramConfig",
    "EmbeddingMatrix",
    "SkipGramDivergence",
    "generate_pairs",
    "count_pairs",
    "pair_loss_and_grad",
    "train_skipgram",
    "probe_loss",
    "export_embeddings",
    "read_embeddings",
]

log = logging.getLogger(__name__)


class SkipGramDivergence(FloatingPointError):
    pass


@dataclass
class SkipGramConfig:
    window: int = 10
    dim: int = 128
    epochs: int = 5
    negatives: int = 5
    lr: float = 0.025
    min_lr: float = 0.0001
    sample: float = 0.0   # frequent-token subsampling threshold; 0 disables
    seed: int = 0
    parallel: bool = False  # lock-free threads, not reproducible

    def __post_init__(self):
        if self.window < 1 or self.dim < 1 or self.negatives < 1:
            raise ValueError("window, dim and negatives must all be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class EmbeddingMatrix:
    """Input vectors (the exported embeddings) and output/context vectors."""

    input_vectors: np.ndarray
    output_vectors: np.ndarray
    losses: list[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.input_vectors.shape[1]

    @property
    def n(self) -> int:
        return self.input_vectors.shape[0]

    def copy(self) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.input_vectors.copy(), self.output_vectors.copy(), list(self.losses))


def _as_sequences(corpus) -> Iterable[np.ndarray]:
    return corpus.sequences() if isinstance(corpus, Corpus) else corpus


def generate_pairs(corpus, window: int) -> Iterator[tuple[int, int]]:
    """``(center, context)`` for every position pair at most ``window`` apart."""
    for seq in _as_sequences(corpus):
        seq = list(seq)
        for i, c in enumerate(seq):
            for j in range(max(0, i - window), min(len(seq), i + window + 1)):
                if j != i:
                    yield int(c), int(seq[j])


def count_pairs(lengths: np.ndarray, window: int) -> int:
    total = 0
    for length in np.unique(lengths):
        i = np.arange(length)
        per = np.minimum(length, i + window + 1) - np.maximum(0, i - window) - 1
        total += int(per.sum()) * int(np.sum(lengths == length))
    return total


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def pair_loss_and_grad(z_c: np.ndarray, z_o: np.ndarray, z_neg: np.ndarray):
    """Loss of one positive pair with its negatives, and gradients.

    Returns ``(loss, d_center, d_context, d_negatives)``.
    """
    z_neg = np.atleast_2d(z_neg)
    pos = z_c @ z_o
    neg = z_neg @ z_c
    loss = np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum()
    g_pos = _sigmoid(pos) - 1.0
    g_neg = _sigmoid(neg)
    d_c = g_pos * z_o + g_neg @ z_neg
    d_o = g_pos * z_c
    d_neg = g_neg[:, None] * z_c[None, :]
    return float(loss), d_c, d_o, d_neg


def probe_loss(emb: EmbeddingMatrix, pairs: np.ndarray, negatives: np.ndarray) -> float:
    """Mean pair loss over fixed ``(center, context)`` pairs and negatives."""
    zc = emb.input_vectors[pairs[:, 0]]
    zo = emb.output_vectors[pairs[:, 1]]
    zn = emb.output_vectors[negatives]
    pos = np.einsum("ij,ij->i", zc, zo)
    neg = np.einsum("ikj,ij->ik", zn, zc)
    return float(np.mean(np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum(axis=1)))


def init_embeddings(n: int, dim: int, seed: int) -> EmbeddingMatrix:
    rng = np.random.default_rng(seed)
    syn0 = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n, dim))
    return EmbeddingMatrix(syn0, np.zeros((n, dim)))


def train_skipgram(corpus: Corpus, cfg: SkipGramConfig, n: int | None = None,
                   init: EmbeddingMatrix | None = None) -> EmbeddingMatrix:
    """Train SGNS embeddings on ``corpus``.

    Noise distribution is token frequency ** 0.75.  The learning rate decays
    linearly from ``cfg.lr`` to ``cfg.min_lr`` over all pairs.  ``init``
    warm-starts from existing vectors (copied, not modified).
    """
    n = len(corpus.sources) if n is None else n
    walks = np.ascontiguousarray(corpus.walks, dtype=np.int64)
    lengths = np.ascontiguousarray(corpus.lengths, dtype=np.int64)
    counts = corpus.token_counts(n).astype(np.float64)
    missing = int(np.sum(counts == 0))
    if missing:
        warnings.warn(f"{missing} node(s) never appear in the corpus", stacklevel=2)
    cum = np.cumsum(counts ** 0.75)
    if init is None:
        emb = init_embeddings(n, cfg.dim, cfg.seed)
    else:
        if init.input_vectors.shape != (n, cfg.dim):
            raise ValueError("warm-start vectors do not match (n, dim)")
        emb = init.copy()
        emb.losses = []
    if cfg.epochs == 0 or not len(walks):
        return emb
    if cfg.sample > 0:
        freq = counts / counts.sum()
        t = cfg.sample
        with np.errstate(divide="ignore", invalid="ignore"):
            keep = np.where(freq > 0, (np.sqrt(freq / t) + 1.0) * t / freq, 1.0)
        keep = np.minimum(keep, 1.0)
    else:
        keep = np.ones(n)
    per_epoch = count_pairs(lengths, cfg.window)
    total = max(1, per_epoch * cfg.epochs)
    order_rng = np.random.default_rng([cfg.seed, 1])
    epoch_fn = _kernels.sgns_epoch_hogwild if cfg.parallel else _kernels.sgns_epoch
    syn0, syn1 = emb.input_vectors, emb.output_vectors
    done = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(walks)).astype(np.int64)
        loss, pairs = epoch_fn(syn0, syn1, walks, lengths, order, cfg.window, cum,
                               cfg.negatives, cfg.lr, cfg.min_lr, done, total,
                               np.uint64(cfg.seed), epoch, keep, cfg.sample > 0)
        done += per_epoch
        mean = loss / max(1, pairs)
        if not np.isfinite(mean) or not np.isfinite(syn0).all():
            raise SkipGramDivergence(
                f"non-finite loss at epoch {epoch}: mean={mean}, lr={cfg.lr}, pairs={pairs}")
        emb.losses.append(float(mean))
        log.debug("skipgram epoch %d: %d pairs, mean loss %.4f", epoch, pairs, mean)
    return emb


def export_embeddings(emb, labels: Sequence[str], path, metadata: dict | None = None) -> None:
    """word2vec text format: header ``n m``, then ``label v_1 ... v_m`` per node.

    ``emb`` is an :class:`EmbeddingMatrix` or a plain ``(n, m)`` array.  With
    ``metadata`` a JSON sidecar is written to ``<path>.json``.
    """
    z = emb.input_vectors if isinstance(emb, EmbeddingMatrix) else np.asarray(emb)
    if z.shape[0] != len(labels):
        raise ValueError("label count does not match embedding rows")
    if not np.isfinite(z).all():
        raise ValueError("embeddings contain non-finite values")
    for lab in labels:
        if not lab or any(ch.isspace() for ch in lab):
            raise ValueError(f"label {lab!r} is empty or contains whitespace")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{z.shape[0]} {z.shape[1]}\n")
        for lab, row in zip(labels, z.tolist()):
            fh.write(lab + " " + " ".join(repr(x) for x in row) + "\n")
    if metadata is not None:
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header")
        n, m = int(header[0]), int(header[1])
        labels, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != m + 1:
                raise ValueError(f"{path}:{lineno}: expected {m + 1} fields, got {len(parts)}")
            labels.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(labels) != n:
        raise ValueError(f"{path}: header says {n} rows, found {len(labels)}")
    return labels, np.array(rows, dtype=np.float64).reshape(n, m)
