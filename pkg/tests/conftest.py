import numpy as np
import pytest

from mlane.graph import Graph
from mlane.tasks import LabelSet


def pytest_addoption(parser):
    parser.addoption("--full", action="store_true", default=False,
                     help="run the long dataset-scale checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full"):
        return
    skip = pytest.mark.skip(reason="needs --full")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    seen = {line.split()[1] for line in CRITERIA}
    for line in CRITERIA:
        terminalreporter.write_line(line)
    for k in range(1, 9):
        if str(k) not in seen:
            terminalreporter.write_line(f"criterion {k} [NOT RUN] skipped or deselected")


def path_graph(n):
    return Graph.from_edges(np.array([(i, i + 1) for i in range(n - 1)]), n=n)


def cycle_graph(n):
    return Graph.from_edges(np.array([(i, (i + 1) % n) for i in range(n)]), n=n)


def star_graph(leaves):
    return Graph.from_edges(np.array([(0, i) for i in range(1, leaves + 1)]), n=leaves + 1)


def two_cliques(size=10):
    edges = []
    for base in (0, size):
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    return Graph.from_edges(np.array(edges), n=2 * size)


def sbm(sizes, p_in, p_out, seed):
    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(len(sizes)), sizes)
    n = len(block)
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    # chain each block so no node is isolated
    offs = np.concatenate([[0], np.cumsum(sizes)])
    chain = [(offs[b] + i, offs[b] + i + 1) for b in range(len(sizes)) for i in range(sizes[b] - 1)]
    return Graph.from_edges(np.concatenate([edges, np.array(chain)]), n=n), block


def role_graph(seed, n_comm=3, size=6, p_in=0.6, n_hubs=3, bridges=4, n_leaves=2):
    """Communities plus hub nodes that share the same local shape.

    Each hub touches ``bridges`` nodes of one community and all of a small
    pool of shared leaves.  Community nodes are labelled by community, hubs
    share one extra "role" class, leaves are unlabelled.
    """
    rng = np.random.default_rng(seed)
    edges = []
    for c in range(n_comm):
        base = c * size
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)
                  if rng.random() < p_in]
        edges += [(base + i, base + i + 1) for i in range(size - 1)]
    h0 = n_comm * size
    l0 = h0 + n_hubs
    for h in range(n_hubs):
        for t in rng.choice(size, bridges, replace=False):
            edges.append((h0 + h, (h % n_comm) * size + int(t)))
        edges += [(h0 + h, l0 + leaf) for leaf in range(n_leaves)]
    n = l0 + n_leaves
    labels = [(i // size,) for i in range(h0)] + [(n_comm,)] * n_hubs + [()] * n_leaves
    g = Graph.from_edges(np.array(edges), n=n)
    return g, LabelSet(labels, [f"c{i}" for i in range(n_comm)] + ["hub"]), \
        np.arange(h0, l0), np.arange(h0)


@pytest.fixture
def path3():
    return path_graph(3)


@pytest.fixture
def cycle4():
    return cycle_graph(4)


@pytest.fixture
def sbm60():
    g, block = sbm([30, 30], 0.3, 0.02, seed=0)
    return g, LabelSet.from_single(block)


@pytest.fixture
def fixture_files(tmp_path):
    g, block = sbm([30, 30], 0.3, 0.02, seed=1)
    edges = tmp_path / "g.edges"
    labels = tmp_path / "g.labels"
    edges.write_text("".join(f"n{u} n{v}\n" for u, v in g.edges()))
    labels.write_text("".join(f"n{v} {'AB'[b]}\n" for v, b in enumerate(block)))
    return edges, labels
