"""The outer loop: sample walks under the policy, embed, score, ascend.

Each iteration draws a corpus with the current policy, trains SkipGram on it
from scratch, scores the embeddings on the task's validation data, and moves
the policy along ``(R - b) * sum_steps grad log pi(a | s)``.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .graph import Graph
from .policy import (
    PolicyDivergence,
    PolicyParams,
    apply_update,
    backward_batch,
    forward_batch,
    init_policy,
    save_policy,
)
from .skipgram import EmbeddingMatrix, SkipGramConfig, train_skipgram
from .walker import Corpus, effective_probs, sample_corpus

__all__ = [
    "TASK_DEFAULTS",
    "MetaConfig",
    "IterationRecord",
    "MetaTrace",
    "MetaResult",
    "MetaLoopAborted",
    "RewardBaseline",
    "score_sum",
    "policy_gradient_estimate",
    "has_converged",
    "run_mlane",
    "derive_seed",
]

log = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1

# (walk_length L, walks per node K, dim m, window w) per task / dataset profile
TASK_DEFAULTS = {
    ("classification", "default"): dict(walk_length=80, n_walks=40, dim=128, window=10),
    ("classification", "amazon"): dict(walk_length=30, n_walks=10, dim=128, window=5),
    ("linkpred", "default"): dict(walk_length=40, n_walks=10, dim=128, window=5),
    ("clustering", "default"): dict(walk_length=80, n_walks=40, dim=128, window=10),
}


@dataclass
class MetaConfig:
    n_walks: int = 40
    walk_length: int = 80
    dim: int = 128
    window: int = 10
    alpha: float = 0.002
    max_iter: int = 20
    conv_window: int = 5
    conv_tol: float = 0.005
    baseline: bool = False
    baseline_decay: float = 0.8
    episodes: int = 1
    seed: int = 0
    sg_epochs: int = 5
    sg_negatives: int = 5
    sg_lr: float = 0.025
    sg_min_lr: float = 0.0001
    sg_sample: float = 0.0
    sg_parallel: bool = False
    warm_start: bool = False
    normalize_gradient: bool = True

    def __post_init__(self):
        for name in ("n_walks", "walk_length", "dim", "window", "max_iter", "episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.conv_window < 2:
            raise ValueError("conv_window must be >= 2")

    @classmethod
    def for_task(cls, task: str, profile: str = "default", **overrides) -> "MetaConfig":
        key = (task, profile)
        if key not in TASK_DEFAULTS:
            raise ValueError(f"no default hyperparameters for task={task!r} profile={profile!r}")
        return cls(**{**TASK_DEFAULTS[key], **overrides})

    def skipgram(self, seed: int) -> SkipGramConfig:
        return SkipGramConfig(window=self.window, dim=self.dim, epochs=self.sg_epochs,
                              negatives=self.sg_negatives, lr=self.sg_lr, min_lr=self.sg_min_lr,
                              sample=self.sg_sample, seed=seed, parallel=self.sg_parallel)


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint32)[0])


class RewardBaseline:
    """Exponential moving average of past rewards.

    Before any reward has been seen the baseline is whatever reward it is
    asked about, so the very first update is zero rather than a push along
    an uncentred sample.
    """

    def __init__(self, decay: float = 0.8):
        self.decay = decay
        self.value: float | None = None

    def __call__(self, current: float = 0.0) -> float:
        return current if self.value is None else self.value

    def update(self, reward: float) -> None:
        if self.value is None:
            self.value = reward
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * reward


def score_sum(corpus: Corpus, theta: PolicyParams) -> PolicyParams:
    """``sum over recorded steps of grad log pi(a | s)``.

    All steps from the same ``(source, d)`` share one forward pass; the
    softmax-layer gradients ``e_a - p`` are accumulated per state first and
    pushed through the network once.  Steps with infeasible actions use the
    renormalised distribution, so single-choice steps contribute nothing.
    """
    src, d, a, mask, _ = corpus.step_arrays()
    depth = int(corpus.max_dists.max()) + 1
    key = src * depth + d
    uniq, inverse = np.unique(key, return_inverse=True)
    us, ud = uniq // depth, uniq % depth
    probs, cache = forward_batch(theta, us, ud / np.maximum(1, corpus.max_dists[us]))
    eff = effective_probs(probs[inverse], mask)
    feasible = (mask[:, None] & np.array([1, 2, 4], dtype=np.uint8)) > 0
    contrib = -eff
    contrib[np.arange(len(a)), a] += 1.0
    contrib *= feasible
    g_logits = np.stack([np.bincount(inverse, contrib[:, k], minlength=len(uniq))
                         for k in range(3)], axis=1)
    return backward_batch(theta, cache, g_logits)


def policy_gradient_estimate(corpus: Corpus, reward: float, theta: PolicyParams,
                             baseline: float = 0.0, normalize: bool = True) -> PolicyParams:
    """REINFORCE estimate ``(R - b) * score_sum``, divided by the step count.

    The corpus must have been sampled under exactly ``theta``.
    """
    if not corpus.has_trajectories:
        raise ValueError("corpus carries no trajectories")
    if corpus.policy_fingerprint != theta.fingerprint():
        raise ValueError("corpus was sampled under a different policy (off-policy update)")
    steps = corpus.n_steps()
    if steps == 0:
        raise ValueError("trajectory set is empty")
    coef = reward - baseline
    if normalize:
        coef /= steps
    grad = score_sum(corpus, theta)
    return PolicyParams([coef * w for w in grad.weights], [coef * b for b in grad.biases],
                        theta.seed)


def has_converged(rewards, window: int = 5, tol: float = 0.005) -> bool:
    """Plateau test on the trailing ``window``-mean of the rewards.

    The first ``window - 1`` means use the shorter history available.  True
    once at least ``window`` rewards exist and the last ``window`` means
    span less than ``tol``.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    r = np.asarray(rewards, dtype=np.float64)
    if len(r) < window:
        return False
    c = np.concatenate([[0.0], np.cumsum(r)])
    idx = np.arange(1, len(r) + 1)
    lo = np.maximum(0, idx - window)
    means = (c[idx] - c[lo]) / (idx - lo)
    tail = means[-window:]
    return bool(tail.max() - tail.min() < tol)


@dataclass
class IterationRecord:
    iteration: int
    reward: float
    grad_norm: float
    seconds: float
    policy_fingerprint: str
    baseline: float
    corpus: dict = field(default_factory=dict)
    checkpoint: str | None = None


@dataclass
class MetaTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def rewards(self) -> list[float]:
        return [r.reward for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "reward", "grad_norm", "seconds", "format_version"])
            for r in self.records:
                w.writerow([r.iteration, repr(r.reward), repr(r.grad_norm),
                            f"{r.seconds:.3f}", TRACE_FORMAT_VERSION])


@dataclass
class MetaResult:
    embeddings: EmbeddingMatrix
    policy: PolicyParams
    best_policy: PolicyParams
    best_iteration: int
    best_report: object
    trace: MetaTrace
    converged: bool


class MetaLoopAborted(RuntimeError):
    def __init__(self, message: str, last_good: PolicyParams, iteration: int):
        super().__init__(message)
        self.last_good = last_good
        self.iteration = iteration


def _write_checkpoint(root, it: int, theta: PolicyParams, report, emb, labels, timing: bool) -> str:
    from .skipgram import export_embeddings

    path = os.path.join(root, f"iter_{it:04d}")
    os.makedirs(path, exist_ok=True)
    save_policy(theta, os.path.join(path, "policy.json"))
    with open(os.path.join(path, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json(timing) + "\n")
    if emb is not None:
        export_embeddings(emb, labels, os.path.join(path, "embeddings.txt"))
    return path


def run_mlane(g: Graph, task, cfg: MetaConfig, *, theta: PolicyParams | None = None,
              checkpoint_dir=None, checkpoint_embeddings: bool = False, timing: bool = True,
              callback: Callable[[IterationRecord], None] | None = None) -> MetaResult:
    """Learn the walk policy and the embeddings for ``task``.

    ``task`` needs ``embedding_graph(g)`` and ``reward(Z) -> TaskReport``;
    its test-side ``report`` is never consulted here.  Returns the
    embeddings of the best-reward iteration, the final policy and the trace.
    """
    eg = task.embedding_graph(g)
    theta = init_policy(eg.n, cfg.seed) if theta is None else theta
    baseline = RewardBaseline(cfg.baseline_decay) if cfg.baseline else None
    trace = MetaTrace()
    best = None
    converged = False
    for it in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        episodes = []
        for ep in range(cfg.episodes):
            corpus = sample_corpus(eg, theta, cfg.n_walks, cfg.walk_length,
                                   derive_seed(cfg.seed, it, ep, 0))
            init = best[1] if (cfg.warm_start and best is not None) else None
            emb = train_skipgram(corpus, cfg.skipgram(derive_seed(cfg.seed, it, ep, 1)),
                                 n=eg.n, init=init)
            report = task.reward(emb)
            r = float(report.reward)
            if not np.isfinite(r):
                raise MetaLoopAborted(f"non-finite reward at iteration {it}", theta, it - 1)
            episodes.append((corpus, r))
            if best is None or r > best[0]:
                best = (r, emb, theta, it, report)
        rewards = [r for _, r in episodes]
        if baseline is None:
            bs = [0.0] * len(episodes)
        elif len(episodes) > 1:
            # leave-one-out mean over this iteration's other episodes
            total = sum(rewards)
            bs = [(total - r) / (len(rewards) - 1) for r in rewards]
        else:
            bs = [baseline(rewards[0])]
        b = float(np.mean(bs))
        grads = [policy_gradient_estimate(c, r, theta, bb, cfg.normalize_gradient)
                 for (c, r), bb in zip(episodes, bs)]
        stats = episodes[-1][0].stats()
        grad = grads[0]
        for extra in grads[1:]:
            grad = PolicyParams([x + y for x, y in zip(grad.weights, extra.weights)],
                                [x + y for x, y in zip(grad.biases, extra.biases)], grad.seed)
        if cfg.episodes > 1:
            grad = PolicyParams([x / cfg.episodes for x in grad.weights],
                                [x / cfg.episodes for x in grad.biases], grad.seed)
        reward = float(np.mean(rewards))
        gnorm = grad.norm()
        try:
            new_theta = apply_update(theta, grad, cfg.alpha)
        except PolicyDivergence as exc:
            raise MetaLoopAborted(str(exc), theta, it - 1) from exc
        ckpt = None
        if checkpoint_dir is not None:
            ckpt = _write_checkpoint(checkpoint_dir, it, theta, report,
                                     emb if checkpoint_embeddings else None, eg.labels, timing)
        rec = IterationRecord(it, reward, gnorm, time.perf_counter() - t0, theta.fingerprint(),
                              b, stats, ckpt)
        trace.records.append(rec)
        log.info("iteration %d: reward %.4f  |grad| %.3g  %.1fs", it, reward, gnorm, rec.seconds)
        if callback is not None:
            callback(rec)
        theta = new_theta
        if baseline is not None:
            for r in rewards:
                baseline.update(r)
        if has_converged(trace.rewards, cfg.conv_window, cfg.conv_tol):
            converged = True
            break
    r, emb, best_theta, best_it, best_report = best
    return MetaResult(emb, theta, best_theta, best_it, best_report, trace, converged)


def config_dict(cfg: MetaConfig) -> dict:
    return asdict(cfg)


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def with_overrides(cfg: MetaConfig, **kw) -> MetaConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
