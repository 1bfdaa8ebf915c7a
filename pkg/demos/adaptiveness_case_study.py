"""
Do role nodes learn a more local walk than community nodes?
===========================================================

The graph mixes small communities with hub nodes that all share the same
local shape (a few bridges into one community plus a common pool of
leaves).  Hubs form their own class, so a clustering reward should favour
walks that stay near a hub (same / backward moves) while community nodes
should favour moving outward.

This script first probes the reward landscape with hand-set policies, then
trains the policy and reports the mean P(same) + P(backward) per group.
With a single scalar reward per iteration the learned split is weak; see
the printed numbers.  The full run takes a few minutes.
"""

import numpy as np

from mlane.graph import Graph
from mlane.meta import MetaConfig, run_mlane
from mlane.policy import zero_policy
from mlane.skipgram import SkipGramConfig, train_skipgram
from mlane.tasks import LabelSet, make_task
from mlane.walker import action_profile, sample_corpus


def role_graph(seed, n_comm=3, size=6, p_in=0.6, n_hubs=3, bridges=4, n_leaves=2):
    rng = np.random.default_rng(seed)
    edges = []
    for c in range(n_comm):
        base = c * size
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)
                  if rng.random() < p_in]
        edges += [(base + i, base + i + 1) for i in range(size - 1)]
    h0, l0 = n_comm * size, n_comm * size + n_hubs
    for h in range(n_hubs):
        edges += [(h0 + h, (h % n_comm) * size + int(t))
                  for t in rng.choice(size, bridges, replace=False)]
        edges += [(h0 + h, l0 + leaf) for leaf in range(n_leaves)]
    labels = [(i // size,) for i in range(h0)] + [(n_comm,)] * n_hubs + [()] * n_leaves
    g = Graph.from_edges(np.array(edges), n=l0 + n_leaves)
    return g, LabelSet(labels, [f"c{i}" for i in range(n_comm)] + ["hub"]), \
        np.arange(h0, l0), np.arange(h0)


def biased(n, rows, action, strength=20.0):
    """Policy that prefers ``action`` on ``rows`` and is uniform elsewhere."""
    th = zero_policy(n)
    th.weights[0][rows, 0] = 1.0
    th.weights[1][0, 0] = 1.0
    th.weights[2][0, action] = strength
    return th


g, labels, hubs, comm = role_graph(0)
task = make_task("clustering", g, labels, 0, strict=True)

# -- reward landscape --------------------------------------------------------
candidates = {"uniform": zero_policy(g.n),
              "communities forward": biased(g.n, comm, 0),
              "hubs same": biased(g.n, hubs, 1),
              "hubs backward": biased(g.n, hubs, 2),
              "communities backward": biased(g.n, comm, 2)}
for name, th in candidates.items():
    rs = []
    for s in range(6):
        c = sample_corpus(g, th, 10, 20, s)
        z = train_skipgram(c, SkipGramConfig(window=5, dim=16, epochs=3, seed=s), n=g.n)
        rs.append(task.reward(z).reward)
    print(f"{name:>22}: mean NMI {np.mean(rs):.3f}")

# -- learning -----------------------------------------------------------------
for seed in range(3):
    g, labels, hubs, comm = role_graph(seed)
    task = make_task("clustering", g, labels, seed, strict=True)
    cfg = MetaConfig(n_walks=10, walk_length=20, dim=16, window=5, sg_epochs=3, alpha=100.0,
                     episodes=4, max_iter=100, baseline=True, conv_tol=0.0, seed=seed)
    res = run_mlane(g, task, cfg)
    probe = sample_corpus(g, res.policy, 10, 20, 99)
    p = action_profile(probe, res.policy)["policy"]
    bfs = p[:, 1] + p[:, 2]
    r = res.trace.rewards
    print(f"seed {seed}: hubs {bfs[hubs].mean():.3f}  communities {bfs[comm].mean():.3f}  "
          f"reward {np.mean(r[:10]):.3f} -> {np.mean(r[-10:]):.3f}")
