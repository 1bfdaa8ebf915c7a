"""Walk policy: an MLP over (one-hot source, normalised distance) -> softmax(3).

The first layer acts on a one-hot vector plus one scalar, so ``x @ W1`` is
computed as ``W1[v] + d_norm * W1[n]`` instead of a dense product.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from .graph import Graph

__all__ = [
    "Action",
    "WalkState",
    "PolicyParams",
    "PolicyDivergence",
    "init_policy",
    "encode_state",
    "policy_forward",
    "log_prob_gradient",
    "apply_update",
    "forward_batch",
    "backward_batch",
    "action_table",
    "save_policy",
    "load_policy",
]

POLICY_FORMAT_VERSION = 1
HIDDEN = (10, 5)


class Action(IntEnum):
    FORWARD = 0
    SAME = 1
    BACKWARD = 2


class WalkState(NamedTuple):
    source: int
    distance: int


class PolicyDivergence(FloatingPointError):
    """Raised when the policy produces non-finite logits or updates."""


@dataclass
class PolicyParams:
    """Weights ``[W1, W2, W3]`` and biases ``[b1, b2, b3]`` of the policy MLP.

    ``W1`` has shape ``(n + 1, h1)``; the last row multiplies the distance.
    Gradients are returned in the same container.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None
    _fp: str | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.weights[0].shape[0] - 1

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "PolicyParams":
        vec = np.asarray(vec, dtype=np.float64)
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise ValueError("flat vector size does not match the architecture")
        return PolicyParams(arrays[0::2], arrays[1::2], self.seed)

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams([np.zeros_like(w) for w in self.weights],
                            [np.zeros_like(b) for b in self.biases], self.seed)

    def copy(self) -> "PolicyParams":
        return PolicyParams([w.copy() for w in self.weights],
                            [b.copy() for b in self.biases], self.seed)

    def fingerprint(self) -> str:
        """Digest of the parameter bytes; tags which policy sampled a corpus."""
        if self._fp is None:
            h = hashlib.blake2b(digest_size=12)
            for a in self.arrays():
                h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
            self._fp = h.hexdigest()
        return self._fp

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_policy(n: int, seed: int, hidden: Sequence[int] = HIDDEN) -> PolicyParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [n + 1, *hidden, 3]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PolicyParams(weights, biases, seed)


def zero_policy(n: int, hidden: Sequence[int] = HIDDEN) -> PolicyParams:
    dims = [n + 1, *hidden, 3]
    return PolicyParams([np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                        [np.zeros(b) for b in dims[1:]], None)


def _max_dist(g: Graph, v: int, max_dist: int | None) -> int:
    return g.distances[v].max_dist if max_dist is None else max_dist


def encode_state(s: WalkState, g: Graph, max_dist: int | None = None) -> np.ndarray:
    """One-hot source followed by ``d / max(1, max_dist(source))``."""
    v, d = s
    if not 0 <= v < g.n:
        raise IndexError(f"source {v} outside [0, {g.n})")
    x = np.zeros(g.n + 1)
    x[v] = 1.0
    x[g.n] = d / max(1, _max_dist(g, v, max_dist))
    return x


def forward_batch(theta: PolicyParams, sources: np.ndarray, dnorm: np.ndarray):
    """Action probabilities for a batch of states.

    Returns ``(probs, cache)``; ``cache`` feeds :func:`backward_batch`.
    """
    sources = np.asarray(sources, dtype=np.int64)
    dnorm = np.asarray(dnorm, dtype=np.float64)
    w1 = theta.weights[0]
    z = w1[sources] + dnorm[:, None] * w1[-1] + theta.biases[0]
    pre = [z]
    acts = [np.maximum(z, 0.0)]
    for w, b in zip(theta.weights[1:-1], theta.biases[1:-1]):
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0))
    logits = acts[-1] @ theta.weights[-1] + theta.biases[-1]
    if not np.isfinite(logits).all():
        raise PolicyDivergence("policy produced non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, (sources, dnorm, pre, acts)


def backward_batch(theta: PolicyParams, cache, g_logits: np.ndarray) -> PolicyParams:
    """Sum over the batch of ``g_logits[i] . d logits_i / d theta``."""
    sources, dnorm, pre, acts = cache
    grad = theta.zeros_like()
    g = np.asarray(g_logits, dtype=np.float64)
    n_layers = len(theta.weights)
    for layer in range(n_layers - 1, 0, -1):
        a_in = acts[layer - 1]
        grad.weights[layer] = a_in.T @ g
        grad.biases[layer] = g.sum(axis=0)
        g = (g @ theta.weights[layer].T) * (pre[layer - 1] > 0)
    gw1 = np.zeros_like(theta.weights[0])
    np.add.at(gw1, sources, g)
    gw1[-1] += dnorm @ g
    grad.weights[0] = gw1
    grad.biases[0] = g.sum(axis=0)
    return grad


def policy_forward(theta: PolicyParams, s: WalkState, g: Graph,
                   max_dist: int | None = None) -> np.ndarray:
    """``(P_f, P_s, P_b)`` at state ``s``."""
    v, d = s
    if not 0 <= v < g.n:
        raise IndexError(f"source {v} outside [0, {g.n})")
    dn = d / max(1, _max_dist(g, v, max_dist))
    probs, _ = forward_batch(theta, np.array([v]), np.array([dn]))
    return probs[0]


def renormalize(probs: np.ndarray, feasible: np.ndarray | None) -> np.ndarray:
    if feasible is None:
        return probs
    p = probs * feasible
    return p / p.sum(axis=-1, keepdims=True)


def log_prob_gradient(theta: PolicyParams, s: WalkState, a: int, g: Graph,
                      feasible: Sequence[bool] | None = None,
                      max_dist: int | None = None) -> PolicyParams:
    """Gradient of ``log pi(a | s)`` w.r.t. every parameter.

    With ``feasible`` given, the probability is the policy renormalised over
    the feasible actions, which is what the walker actually samples from.
    """
    v, d = s
    dn = d / max(1, _max_dist(g, v, max_dist))
    probs, cache = forward_batch(theta, np.array([v]), np.array([dn]))
    mask = None if feasible is None else np.asarray(feasible, dtype=np.float64)
    p = renormalize(probs[0], mask)
    g_logits = -p
    g_logits[int(a)] += 1.0
    if mask is not None:
        g_logits = g_logits * mask
    return backward_batch(theta, cache, g_logits[None, :])


def apply_update(theta: PolicyParams, grad: PolicyParams, alpha: float) -> PolicyParams:
    """Gradient ascent step ``theta + alpha * grad``; ``theta`` is left untouched."""
    if alpha <= 0:
        raise ValueError("learning rate must be positive")
    if not grad.is_finite():
        raise PolicyDivergence("non-finite policy gradient")
    return PolicyParams([w + alpha * gw for w, gw in zip(theta.weights, grad.weights)],
                        [b + alpha * gb for b, gb in zip(theta.biases, grad.biases)],
                        theta.seed)


def add_params(a: PolicyParams, b: PolicyParams, scale: float = 1.0) -> PolicyParams:
    return PolicyParams([x + scale * y for x, y in zip(a.weights, b.weights)],
                        [x + scale * y for x, y in zip(a.biases, b.biases)], a.seed)


def action_table(theta: PolicyParams, max_dists: np.ndarray) -> np.ndarray:
    """``(n, D, 3)`` table of action probabilities for every ``(v, d <= max_dist(v))``.

    Entries with ``d > max_dist(v)`` are filled with the uniform distribution
    and never read by the walker.
    """
    n = theta.n
    max_dists = np.asarray(max_dists, dtype=np.int64)
    depth = int(max_dists.max()) + 1 if n else 1
    table = np.full((n, depth, 3), 1.0 / 3.0)
    vs, ds = _valid_states(max_dists)
    probs, _ = forward_batch(theta, vs, ds / np.maximum(1, max_dists[vs]))
    table[vs, ds] = probs
    return table


def _valid_states(max_dists: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = max_dists + 1
    vs = np.repeat(np.arange(len(max_dists)), counts)
    starts = np.cumsum(counts) - counts
    ds = np.arange(vs.shape[0]) - np.repeat(starts, counts)
    return vs, ds


def policy_to_dict(theta: PolicyParams) -> dict:
    return {
        "format": "mlane-policy",
        "format_version": POLICY_FORMAT_VERSION,
        "n": theta.n,
        "hidden": list(theta.hidden),
        "activation": "relu",
        "seed": theta.seed,
        "layers": [
            {"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(theta.weights, theta.biases)
        ],
    }


def policy_from_dict(data: dict) -> PolicyParams:
    if data.get("format") != "mlane-policy":
        raise ValueError("not a policy checkpoint")
    weights, biases = [], []
    for layer in data["layers"]:
        weights.append(np.array(layer["weight"], dtype=np.float64).reshape(layer["shape"]))
        biases.append(np.array(layer["bias"], dtype=np.float64))
    theta = PolicyParams(weights, biases, data.get("seed"))
    if theta.n != data["n"]:
        raise ValueError("checkpoint n does not match layer shapes")
    return theta


def save_policy(theta: PolicyParams, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(theta), fh)
        fh.write("\n")


def load_policy(path) -> PolicyParams:
    with open(path, encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))
