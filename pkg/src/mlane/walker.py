"""Policy-driven walks on the (source, distance) MDP, plus baseline walkers.

A walk from source ``v`` sits in state ``(v, d)`` where ``d`` is the BFS hop
distance of the current node from ``v``.  Each step draws an action from the
policy, maps it to the neighbours one hop further / equally far / one hop
closer, and moves to one of them uniformly.  If the drawn action has no
matching neighbour the policy is renormalised over the feasible actions and
redrawn; the step is flagged as a fallback.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels
from .graph import DistanceField, Graph, partition_neighbors
from .policy import Action, PolicyParams, WalkState, action_table, forward_batch, policy_forward

__all__ = [
    "Trajectory",
    "Corpus",
    "effective_probs",
    "sample_walk",
    "sample_corpus",
    "baseline_corpus",
    "trajectory_log_prob",
    "baseline_walk_uniform",
    "baseline_walk_pq",
    "pq_transition_probs",
    "write_corpus",
    "write_trajectories",
    "action_profile",
]

MASK_BITS = np.array([1, 2, 4], dtype=np.uint8)


def effective_probs(probs: np.ndarray, mask) -> np.ndarray:
    """Distribution the walker actually samples from, given feasibility bits.

    ``mask`` is either a 3-vector of booleans or an int bitmask (bit ``a``
    set when action ``a`` has a neighbour).  A policy that puts zero mass on
    every feasible action falls back to uniform over them.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.dtype != bool:
        mask = (mask[..., None] & MASK_BITS) > 0
    q = probs * mask
    total = q.sum(axis=-1, keepdims=True)
    uniform = mask / mask.sum(axis=-1, keepdims=True)
    return np.where(total > 0, q / np.where(total > 0, total, 1.0), uniform)


@dataclass
class Trajectory:
    """One walk's recorded decisions.

    ``distances[j]`` and ``actions[j]`` are the state distance and realised
    action of step ``j``; ``feasible[j]`` is the bitmask of actions that had
    a neighbour and ``fallback[j]`` marks steps whose first draw was
    infeasible.
    """

    source: int
    distances: np.ndarray
    actions: np.ndarray
    fallback: np.ndarray
    feasible: np.ndarray
    max_dist: int

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def steps(self) -> list[tuple[WalkState, Action]]:
        return [(WalkState(self.source, int(d)), Action(int(a)))
                for d, a in zip(self.distances, self.actions)]


@dataclass
class Corpus:
    """``K`` walks per source, stored row-wise.

    Row ``i * K + k`` holds walk ``k`` of ``sources[i]``.  ``walks`` is padded
    with ``-1`` past ``lengths``; step arrays are padded with ``-1`` actions.
    """

    walks: np.ndarray
    lengths: np.ndarray
    sources: np.ndarray
    n_walks: int
    walk_length: int
    seed: int
    steps_d: np.ndarray | None = None
    steps_a: np.ndarray | None = None
    steps_fallback: np.ndarray | None = None
    steps_mask: np.ndarray | None = None
    max_dists: np.ndarray | None = None
    policy_fingerprint: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def has_trajectories(self) -> bool:
        return self.steps_a is not None

    def __len__(self) -> int:
        return self.walks.shape[0]

    def sequence(self, r: int) -> np.ndarray:
        return self.walks[r, :self.lengths[r]]

    def sequences(self) -> Iterator[np.ndarray]:
        for r in range(len(self)):
            yield self.sequence(r)

    def contexts(self, v: int) -> list[np.ndarray]:
        """``C_v``: the K sequences sourced at node ``v``."""
        (pos,) = np.nonzero(self.sources == v)
        rows = range(pos[0] * self.n_walks, (pos[0] + 1) * self.n_walks) if len(pos) else []
        return [self.sequence(r) for r in rows]

    def trajectory(self, r: int) -> Trajectory:
        if not self.has_trajectories:
            raise ValueError("corpus was sampled without trajectories")
        n_steps = self.lengths[r] - 1
        v = int(self.walks[r, 0])
        return Trajectory(v, self.steps_d[r, :n_steps].copy(), self.steps_a[r, :n_steps].copy(),
                          self.steps_fallback[r, :n_steps].copy(),
                          self.steps_mask[r, :n_steps].copy(), int(self.max_dists[v]))

    def trajectories(self) -> Iterator[Trajectory]:
        for r in range(len(self)):
            yield self.trajectory(r)

    def n_steps(self) -> int:
        return int((self.lengths - 1).sum())

    def step_arrays(self):
        """Flattened ``(source, d, action, mask, fallback)`` of every recorded step."""
        valid = self.steps_a >= 0
        src = np.broadcast_to(self.walks[:, :1], self.steps_a.shape)[valid]
        return (src.astype(np.int64), self.steps_d[valid].astype(np.int64),
                self.steps_a[valid].astype(np.int64), self.steps_mask[valid],
                self.steps_fallback[valid])

    def token_counts(self, n: int) -> np.ndarray:
        flat = self.walks[self.walks >= 0]
        return np.bincount(flat, minlength=n)

    def stats(self) -> dict:
        out = {"walks": len(self), "tokens": int(self.lengths.sum())}
        if self.has_trajectories:
            _, _, a, _, fb = self.step_arrays()
            total = max(1, a.shape[0])
            out.update(steps=int(a.shape[0]),
                       forward=float(np.mean(a == 0)) if a.size else 0.0,
                       same=float(np.mean(a == 1)) if a.size else 0.0,
                       backward=float(np.mean(a == 2)) if a.size else 0.0,
                       fallback=float(fb.sum() / total))
        return out


def sample_walk(g: Graph, field: DistanceField, theta: PolicyParams, length: int,
                rng: np.random.Generator, start: int | None = None) -> tuple[np.ndarray, Trajectory]:
    """One policy walk of ``length`` steps from ``field.source``.

    ``start`` resumes a walk of that source at another reachable node.
    """
    if length < 1:
        raise ValueError("walk length must be >= 1")
    v = field.source
    cur = v if start is None else int(start)
    if field.dist[cur] < 0:
        raise ValueError(f"node {cur} is not reachable from source {v}")
    nodes = [cur]
    ds, acts, fbs, masks = [], [], [], []
    if len(g.neighbors(cur)):
        for _ in range(length):
            d = int(field.dist[cur])
            part = partition_neighbors(g, field, cur)
            groups = (part.forward, part.same, part.backward)
            feasible = np.array([len(x) > 0 for x in groups])
            probs = policy_forward(theta, WalkState(v, d), g, field.max_dist)
            a = int(rng.choice(3, p=probs))
            fallback = not feasible[a]
            if fallback:
                a = int(rng.choice(3, p=effective_probs(probs, feasible)))
            cur = int(rng.choice(groups[a]))
            nodes.append(cur)
            ds.append(d)
            acts.append(a)
            fbs.append(fallback)
            masks.append(int(np.dot(feasible, MASK_BITS)))
    traj = Trajectory(v, np.array(ds, dtype=np.int64), np.array(acts, dtype=np.int64),
                      np.array(fbs, dtype=bool), np.array(masks, dtype=np.uint8), field.max_dist)
    return np.array(nodes, dtype=np.int64), traj


def _rows(g: Graph, n_walks: int, length: int):
    if n_walks < 1 or length < 1:
        raise ValueError("number of walks and walk length must be >= 1")
    sources = np.arange(g.n, dtype=np.int64)
    total = g.n * n_walks
    walks = np.full((total, length + 1), -1, dtype=np.int64)
    lengths = np.zeros(total, dtype=np.int64)
    return sources, walks, lengths


def sample_corpus(g: Graph, theta: PolicyParams, n_walks: int, length: int, seed: int) -> Corpus:
    """``n_walks`` policy walks of ``length`` steps from every node.

    Each (node, walk) pair draws from its own keyed random stream, so the
    result is identical whatever the thread count.
    """
    if theta.n != g.n:
        raise ValueError(f"policy is sized for n={theta.n}, graph has n={g.n}")
    sources, walks, lengths = _rows(g, n_walks, length)
    cache = g.distances
    max_dists = cache.max_dists()
    dist = cache.matrix()
    table = action_table(theta, max_dists)
    shape = walks[:, 1:].shape
    steps_d = np.full(shape, -1, dtype=np.int32)
    steps_a = np.full(shape, -1, dtype=np.int8)
    steps_fb = np.zeros(shape, dtype=np.bool_)
    steps_mask = np.zeros(shape, dtype=np.uint8)
    _kernels.policy_walks(g.indptr, g.indices, dist, table, sources, n_walks, length,
                          np.uint64(seed), walks, steps_d, steps_a, steps_fb, steps_mask, lengths)
    return Corpus(walks, lengths, sources, n_walks, length, seed, steps_d, steps_a, steps_fb,
                  steps_mask, max_dists, theta.fingerprint())


def baseline_corpus(g: Graph, n_walks: int, length: int, seed: int,
                    p: float = 1.0, q: float = 1.0) -> Corpus:
    """Uniform (``p = q = 1``) or node2vec-style second-order walks."""
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    sources, walks, lengths = _rows(g, n_walks, length)
    _kernels.pq_walks(g.indptr, g.indices, sources, n_walks, length, float(p), float(q),
                      np.uint64(seed), walks, lengths)
    return Corpus(walks, lengths, sources, n_walks, length, seed, meta={"p": p, "q": q})


def _step_log_probs(theta: PolicyParams, src, d, a, mask, max_dists) -> np.ndarray:
    dn = d / np.maximum(1, max_dists[src])
    probs, _ = forward_batch(theta, src, dn)
    eff = effective_probs(probs, mask)
    return np.log(eff[np.arange(len(a)), a])


def trajectory_log_prob(psi, theta: PolicyParams) -> float:
    """``log rho``: sum of log action probabilities over every recorded step.

    ``psi`` is a :class:`Trajectory`, a list of them, or a :class:`Corpus`.
    Steps taken with some action infeasible use the renormalised
    probability the walker sampled from.
    """
    if isinstance(psi, Corpus):
        src, d, a, mask, _ = psi.step_arrays()
        if not len(a):
            return 0.0
        return float(_step_log_probs(theta, src, d, a, mask, psi.max_dists).sum())
    if isinstance(psi, Trajectory):
        psi = [psi]
    total = 0.0
    for t in psi:
        if not len(t):
            continue
        src = np.full(len(t), t.source, dtype=np.int64)
        md = np.zeros(theta.n, dtype=np.int64)
        md[t.source] = t.max_dist
        total += float(_step_log_probs(theta, src, t.distances, t.actions, t.feasible, md).sum())
    return total


def baseline_walk_uniform(g: Graph, source: int, length: int,
                          rng: np.random.Generator) -> np.ndarray:
    nodes = [source]
    cur = source
    for _ in range(length):
        nb = g.neighbors(cur)
        if not len(nb):
            break
        cur = int(rng.choice(nb))
        nodes.append(cur)
    return np.array(nodes, dtype=np.int64)


def pq_transition_probs(g: Graph, prev: int, cur: int, p: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Neighbours of ``cur`` and their probabilities given the previous node."""
    nb = g.neighbors(cur)
    weights = np.array([1.0 / p if w == prev else (1.0 if g.has_edge(prev, w) else 1.0 / q)
                        for w in nb])
    return nb, weights / weights.sum()


def baseline_walk_pq(g: Graph, source: int, length: int, p: float, q: float,
                     rng: np.random.Generator) -> np.ndarray:
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    nodes = [source]
    prev, cur = -1, source
    for _ in range(length):
        nb = g.neighbors(cur)
        if not len(nb):
            break
        if prev < 0:
            nxt = int(rng.choice(nb))
        else:
            nb, probs = pq_transition_probs(g, prev, cur, p, q)
            nxt = int(rng.choice(nb, p=probs))
        prev, cur = cur, nxt
        nodes.append(cur)
    return np.array(nodes, dtype=np.int64)


def write_corpus(corpus: Corpus, g: Graph, path) -> None:
    """One walk per line, external labels separated by spaces."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in corpus.sequences():
            fh.write(" ".join(g.labels[x] for x in seq.tolist()))
            fh.write("\n")


def write_trajectories(corpus: Corpus, g: Graph, path) -> None:
    """JSON lines ``{"source": label, "steps": [[d, action, fallback], ...]}``."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in corpus.trajectories():
            steps = [[int(d), int(a), bool(f)] for d, a, f in zip(t.distances, t.actions, t.fallback)]
            fh.write(json.dumps({"source": g.labels[t.source], "steps": steps}))
            fh.write("\n")


def action_profile(corpus: Corpus, theta: PolicyParams) -> dict[str, np.ndarray]:
    """Per-source averages over the states a corpus actually visited.

    ``policy``: mean raw policy output ``(P_f, P_s, P_b)``; ``realized``:
    frequencies of the actions taken.  Sources without steps get NaN rows.
    """
    src, d, a, _, _ = corpus.step_arrays()
    n = theta.n
    probs, _ = forward_batch(theta, src, d / np.maximum(1, corpus.max_dists[src]))
    counts = np.bincount(src, minlength=n).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_policy = np.stack([np.bincount(src, probs[:, k], minlength=n) for k in range(3)], 1)
        realized = np.stack([np.bincount(src, (a == k).astype(float), minlength=n)
                             for k in range(3)], 1)
        mean_policy /= counts[:, None]
        realized /= counts[:, None]
    return {"policy": mean_policy, "realized": realized, "steps": counts}
