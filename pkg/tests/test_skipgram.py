import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlane.policy import zero_policy
from mlane.skipgram import (
    EmbeddingMatrix,
    SkipGramConfig,
    count_pairs,
    export_embeddings,
    generate_pairs,
    init_embeddings,
    pair_loss_and_grad,
    probe_loss,
    read_embeddings,
    train_skipgram,
)
from mlane.tasks import kmeans, purity
from mlane.walker import baseline_corpus, sample_corpus

from conftest import two_cliques


def test_pairs_examples():
    assert list(generate_pairs([[0, 1, 2]], 1)) == [(0, 1), (1, 0), (1, 2), (2, 1)]
    assert list(generate_pairs([[7]], 3)) == []
    pairs = list(generate_pairs([list(range(5))], 10))
    assert len(pairs) == 20 and len(set(pairs)) == 20


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=6), st.integers(1, 12))
def test_count_pairs_matches_enumeration(lengths, w):
    seqs = [list(range(k)) for k in lengths]
    assert count_pairs(np.array(lengths), w) == sum(1 for _ in generate_pairs(seqs, w))


def test_pair_gradient_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(10):
        zc, zo = rng.normal(size=8), rng.normal(size=8)
        zn = rng.normal(size=(5, 8))
        _, dc, do, dn = pair_loss_and_grad(zc, zo, zn)
        for vec, grad in ((zc, dc), (zo, do), (zn, dn)):
            flat = vec.reshape(-1)
            g = grad.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = pair_loss_and_grad(zc, zo, zn)[0]
                flat[i] = old - h
                down = pair_loss_and_grad(zc, zo, zn)[0]
                flat[i] = old
                fd = (up - down) / (2 * h)
                assert abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-6) < 1e-4


def test_zero_epochs_returns_init():
    g = two_cliques(5)
    c = baseline_corpus(g, 2, 5, seed=0)
    emb = train_skipgram(c, SkipGramConfig(dim=8, epochs=0, seed=4), n=g.n)
    ref = init_embeddings(g.n, 8, 4)
    assert np.array_equal(emb.input_vectors, ref.input_vectors)
    assert np.all(emb.output_vectors == 0)
    assert np.all(np.abs(ref.input_vectors) <= 0.5 / 8)


def _cosines(z, size):
    u = z / np.linalg.norm(z, axis=1, keepdims=True)
    sim = u @ u.T
    block = np.repeat([0, 1], size)
    same = block[:, None] == block[None, :]
    off = ~np.eye(len(z), dtype=bool)
    return sim[same & off].mean(), sim[~same].mean()


@pytest.mark.parametrize("seed", range(5))
def test_two_cliques_separate(seed):
    g = two_cliques(10)
    c = baseline_corpus(g, 10, 20, seed=seed)
    emb = train_skipgram(c, SkipGramConfig(window=5, dim=16, seed=seed), n=g.n)
    intra, inter = _cosines(emb.input_vectors, 10)
    assert intra - inter >= 0.3
    assert purity(kmeans(emb.input_vectors, 2, seed), np.repeat([0, 1], 10)) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_training_lowers_probe_loss(seed):
    g = two_cliques(10)
    c = baseline_corpus(g, 10, 20, seed=seed)
    rng = np.random.default_rng(seed)
    pairs = np.array(list(generate_pairs(list(c.sequences())[:20], 5)))
    negs = rng.integers(0, g.n, size=(len(pairs), 5))
    start = probe_loss(init_embeddings(g.n, 16, seed), pairs, negs)
    one = train_skipgram(c, SkipGramConfig(window=5, dim=16, epochs=1, seed=seed), n=g.n)
    assert probe_loss(one, pairs, negs) < start


def test_single_thread_bit_reproducible():
    g = two_cliques(6)
    c = sample_corpus(g, zero_policy(g.n), 4, 10, seed=1)
    cfg = SkipGramConfig(window=3, dim=8, seed=2)
    a = train_skipgram(c, cfg, n=g.n)
    b = train_skipgram(c, cfg, n=g.n)
    assert a.input_vectors.tobytes() == b.input_vectors.tobytes()
    assert a.output_vectors.tobytes() == b.output_vectors.tobytes()
    other = train_skipgram(c, SkipGramConfig(window=3, dim=8, seed=3), n=g.n)
    assert not np.array_equal(a.input_vectors, other.input_vectors)


def test_parallel_mode_trains():
    g = two_cliques(10)
    c = baseline_corpus(g, 10, 20, seed=0)
    emb = train_skipgram(c, SkipGramConfig(window=5, dim=16, seed=0, parallel=True), n=g.n)
    intra, inter = _cosines(emb.input_vectors, 10)
    assert np.isfinite(emb.input_vectors).all() and intra > inter


def test_subsampling_runs():
    g = two_cliques(10)
    c = baseline_corpus(g, 10, 20, seed=0)
    emb = train_skipgram(c, SkipGramConfig(window=5, dim=16, seed=0, sample=1e-2), n=g.n)
    assert np.isfinite(emb.input_vectors).all()


def test_warm_start_copies():
    g = two_cliques(5)
    c = baseline_corpus(g, 3, 8, seed=0)
    base = train_skipgram(c, SkipGramConfig(dim=8, window=2, seed=0), n=g.n)
    snapshot = base.input_vectors.copy()
    warm = train_skipgram(c, SkipGramConfig(dim=8, window=2, seed=1), n=g.n, init=base)
    assert np.array_equal(base.input_vectors, snapshot)
    assert not np.array_equal(warm.input_vectors, snapshot)
    with pytest.raises(ValueError):
        train_skipgram(c, SkipGramConfig(dim=4, window=2), n=g.n, init=base)


def test_divergence_detected():
    from mlane.skipgram import SkipGramDivergence

    g = two_cliques(5)
    c = baseline_corpus(g, 3, 8, seed=0)
    bad = init_embeddings(g.n, 4, 0)
    bad.input_vectors[0, 0] = np.nan
    with pytest.raises(SkipGramDivergence):
        train_skipgram(c, SkipGramConfig(dim=4, window=2), n=g.n, init=bad)


def test_config_validation():
    with pytest.raises(ValueError):
        SkipGramConfig(window=0)
    with pytest.raises(ValueError):
        SkipGramConfig(negatives=0)


def test_export_format(tmp_path):
    z = np.array([[0.1, -2.0], [3.5, 1e-17]])
    path = tmp_path / "e.txt"
    export_embeddings(z, ["a", "b"], path, metadata={"seed": np.int64(3)})
    lines = path.read_text().splitlines()
    assert len(lines) == 3 and lines[0] == "2 2" and lines[1].startswith("a ")
    labels, back = read_embeddings(path)
    assert labels == ["a", "b"] and np.array_equal(back, z)
    assert '"seed": 3' in (tmp_path / "e.txt.json").read_text()


def test_export_roundtrip_cosines(tmp_path):
    rng = np.random.default_rng(0)
    emb = EmbeddingMatrix(rng.normal(size=(6, 5)), np.zeros((6, 5)))
    export_embeddings(emb, [f"n{i}" for i in range(6)], tmp_path / "e.txt")
    _, back = read_embeddings(tmp_path / "e.txt")

    def cos(z):
        u = z / np.linalg.norm(z, axis=1, keepdims=True)
        return u @ u.T

    assert np.max(np.abs(cos(back) - cos(emb.input_vectors))) < 1e-6


@pytest.mark.parametrize("label", ["has space", "tab\there", ""])
def test_export_rejects_bad_labels(tmp_path, label):
    with pytest.raises(ValueError, match="whitespace"):
        export_embeddings(np.zeros((1, 2)), [label], tmp_path / "e.txt")


def test_read_rejects_bad_rows(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 2\na 1 2\nb 1\n")
    with pytest.raises(ValueError, match="expected 3 fields"):
        read_embeddings(p)
