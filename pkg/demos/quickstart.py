"""
Quickstart: learn a walk policy on a toy planted-partition graph
============================================================

Run with ``python3 demos/quickstart.py``.  Takes well under a minute.
"""

import numpy as np

from mlane.graph import Graph
from mlane.meta import MetaConfig, run_mlane
from mlane.tasks import LabelSet, make_task
from mlane.walker import action_profile, sample_corpus

# three loose blocks of 20 nodes with plenty of cross edges
rng = np.random.default_rng(0)
block = np.repeat([0, 1, 2], 20)
iu, ju = np.triu_indices(60, 1)
keep = rng.random(len(iu)) < np.where(block[iu] == block[ju], 0.2, 0.05)
edges = np.stack([iu[keep], ju[keep]], axis=1)
g = Graph.from_edges(edges, n=60)
labels = LabelSet.from_single(block)
print(g)

# the task owns the split; reward is validation Macro-F1
task = make_task("classification", g, labels, seed=0)

# small settings so the loop finishes quickly
cfg = MetaConfig(n_walks=10, walk_length=30, dim=16, window=5, max_iter=8, baseline=True)
result = run_mlane(g, task, cfg)

for rec in result.trace.records:
    print(f"iteration {rec.iteration}: reward {rec.reward:.3f}  |grad| {rec.grad_norm:.2e}")

# held-out score of the best embeddings
print("test report:", task.report(result.embeddings).metrics)

# what the learned policy does, averaged over states each node visits
probe = sample_corpus(g, result.policy, 10, 30, seed=123)
prof = action_profile(probe, result.policy)["policy"]
print("mean P(forward, same, backward):", np.nanmean(prof, axis=0).round(3))
