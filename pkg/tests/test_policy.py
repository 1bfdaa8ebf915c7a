import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlane.graph import Graph
from mlane.policy import (
    Action,
    PolicyDivergence,
    PolicyParams,
    WalkState,
    apply_update,
    encode_state,
    init_policy,
    load_policy,
    log_prob_gradient,
    policy_forward,
    save_policy,
    zero_policy,
)

from conftest import path_graph


def scalar_forward(theta, x):
    """Loop-by-loop MLP evaluation used as an oracle."""
    h = list(x)
    layers = list(zip(theta.weights, theta.biases))
    for k, (w, b) in enumerate(layers):
        out = []
        for j in range(w.shape[1]):
            s = float(b[j])
            for i in range(w.shape[0]):
                s += h[i] * float(w[i, j])
            out.append(s if k == len(layers) - 1 else max(s, 0.0))
        h = out
    m = max(h)
    e = [math.exp(z - m) for z in h]
    tot = sum(e)
    return [z / tot for z in e]


def random_policy(n, seed, scale=1.0):
    th = init_policy(n, seed)
    rng = np.random.default_rng(seed + 1000)
    return PolicyParams([w * scale for w in th.weights],
                        [rng.normal(0, 0.3, b.shape) for b in th.biases], seed)


def test_action_encoding():
    assert [int(a) for a in Action] == [0, 1, 2]
    assert [a.name for a in Action] == ["FORWARD", "SAME", "BACKWARD"]


def test_encode_state_examples():
    g = path_graph(3)  # max_dist: 0->2, 1->1, 2->2
    assert encode_state(WalkState(1, 0), g).tolist() == [0, 1, 0, 0.0]
    assert encode_state(WalkState(0, 2), g).tolist() == [1, 0, 0, 1.0]
    assert encode_state(WalkState(2, 1), g).tolist() == [0, 0, 1, 0.5]
    with pytest.raises(IndexError):
        encode_state(WalkState(3, 0), g)


def test_zero_policy_uniform():
    g = path_graph(4)
    th = zero_policy(g.n)
    for v in range(4):
        for d in range(g.distances[v].max_dist + 1):
            assert np.allclose(policy_forward(th, WalkState(v, d), g), 1 / 3, atol=0, rtol=1e-15)


def test_output_bias_closed_form():
    g = path_graph(3)
    th = zero_policy(g.n)
    th.biases[-1][:] = [math.log(2), 0, 0]
    p = policy_forward(th, WalkState(0, 0), g)
    assert np.allclose(p, [0.5, 0.25, 0.25], rtol=0, atol=1e-15)


def test_forward_matches_scalar_oracle():
    g = path_graph(6)
    th = random_policy(g.n, 7)
    for v in range(g.n):
        for d in range(g.distances[v].max_dist + 1):
            s = WalkState(v, d)
            got = policy_forward(th, s, g)
            want = scalar_forward(th, encode_state(s, g))
            assert np.max(np.abs(got - want)) < 1e-12


def test_forward_deterministic():
    g = path_graph(5)
    th = random_policy(g.n, 3)
    a = policy_forward(th, WalkState(2, 1), g)
    b = policy_forward(th, WalkState(2, 1), g)
    assert a.tobytes() == b.tobytes()


def test_non_finite_logits_raise():
    g = path_graph(3)
    th = zero_policy(g.n)
    th.biases[-1][0] = np.inf
    with pytest.raises(PolicyDivergence):
        policy_forward(th, WalkState(0, 0), g)


def test_gradient_at_uniform():
    g = path_graph(3)
    grad = log_prob_gradient(zero_policy(g.n), WalkState(0, 0), Action.FORWARD, g)
    assert np.allclose(grad.biases[-1], [2 / 3, -1 / 3, -1 / 3], rtol=0, atol=1e-15)


def _fd_check(th, s, a, g, feasible=None, h=1e-5):
    grad = log_prob_gradient(th, s, a, g, feasible).flat()
    base = th.flat()
    mask = None if feasible is None else np.asarray(feasible, float)

    def logp(vec):
        p = policy_forward(th.with_flat(vec), s, g)
        if mask is not None:
            p = p * mask / (p * mask).sum()
        return math.log(p[a])

    worst = 0.0
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = h
        fd = (logp(base + e) - logp(base - e)) / (2 * h)
        denom = max(abs(fd), abs(grad[i]), 1e-6)
        worst = max(worst, abs(fd - grad[i]) / denom)
    return worst


def test_gradient_finite_differences():
    g = path_graph(5)
    rng = np.random.default_rng(11)
    for t in range(20):
        th = random_policy(g.n, 100 + t)
        v = int(rng.integers(g.n))
        d = int(rng.integers(g.distances[v].max_dist + 1))
        a = int(rng.integers(3))
        assert _fd_check(th, WalkState(v, d), a, g) < 1e-4


def test_gradient_finite_differences_renormalised():
    g = path_graph(5)
    th = random_policy(g.n, 5)
    assert _fd_check(th, WalkState(0, 2), Action.BACKWARD, g, feasible=[True, False, True]) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4), st.integers(0, 4))
def test_score_identity(seed, v, dd):
    g = path_graph(5)
    th = random_policy(g.n, seed)
    d = dd % (g.distances[v].max_dist + 1)
    s = WalkState(v, d)
    p = policy_forward(th, s, g)
    total = sum(p[a] * log_prob_gradient(th, s, a, g).flat() for a in range(3))
    assert np.max(np.abs(total)) < 1e-8


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 8), st.floats(0.1, 10))
def test_distribution_sums_to_one(seed, n, scale):
    g = path_graph(n)
    th = random_policy(n, seed % 1000, scale)
    rng = np.random.default_rng(seed)
    v = int(rng.integers(n))
    d = int(rng.integers(g.distances[v].max_dist + 1))
    p = policy_forward(th, WalkState(v, d), g)
    assert abs(p.sum() - 1) < 1e-9 and np.all(p >= 0)


def test_apply_update_contract():
    th = init_policy(4, 0)
    before = th.flat().copy()
    same = apply_update(th, th.zeros_like(), 0.5)
    assert np.array_equal(same.flat(), before)
    ones = th.with_flat(np.ones_like(before))
    up = apply_update(th, ones, 1.0)
    assert np.array_equal(up.flat(), before + 1)
    assert np.array_equal(th.flat(), before)  # functional
    g1 = th.with_flat(np.random.default_rng(1).normal(size=before.size))
    g2 = th.with_flat(np.random.default_rng(2).normal(size=before.size))
    two = apply_update(apply_update(th, g1, 0.01), g2, 0.01)
    one = apply_update(th, g1.with_flat(g1.flat() + g2.flat()), 0.01)
    assert np.allclose(two.flat(), one.flat(), rtol=0, atol=1e-15)


def test_apply_update_errors():
    th = init_policy(3, 0)
    with pytest.raises(ValueError):
        apply_update(th, th.zeros_like(), 0.0)
    bad = th.with_flat(np.full(th.flat().size, np.nan))
    with pytest.raises(PolicyDivergence):
        apply_update(th, bad, 0.1)


def test_init_shapes_and_seed():
    th = init_policy(7, 3)
    assert [w.shape for w in th.weights] == [(8, 10), (10, 5), (5, 3)]
    assert all(np.all(b == 0) for b in th.biases)
    r = math.sqrt(6 / (8 + 10))
    assert np.all(np.abs(th.weights[0]) <= r)
    assert init_policy(7, 3).fingerprint() == th.fingerprint()
    assert init_policy(7, 4).fingerprint() != th.fingerprint()


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    th = random_policy(9, 2)
    path = tmp_path / "p.json"
    save_policy(th, path)
    back = load_policy(path)
    assert back.flat().tobytes() == th.flat().tobytes()
    assert back.hidden == (10, 5) and back.n == 9 and back.seed == 2
