"""Metric kernels against straight-line reference implementations."""
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import normalized_mutual_info_score

from mlane.tasks.metrics import indicator

from mlane.tasks import micro_macro_f1, nmi, precision_at_k, purity


# -- reference implementations ----------------------------------------------

def ref_f1(pred, truth, n_classes):
    tp = [0] * n_classes
    fp = [0] * n_classes
    fn = [0] * n_classes
    for p, t in zip(pred, truth):
        p, t = set(p), set(t)
        for c in range(n_classes):
            if c in p and c in t:
                tp[c] += 1
            elif c in p:
                fp[c] += 1
            elif c in t:
                fn[c] += 1
    TP, FP, FN = sum(tp), sum(fp), sum(fn)
    micro = 2 * TP / (2 * TP + FP + FN) if (2 * TP + FP + FN) else 0.0
    per = [2 * tp[c] / (2 * tp[c] + fp[c] + fn[c]) for c in range(n_classes)
           if tp[c] + fp[c] + fn[c] > 0]
    macro = sum(per) / len(per) if per else 0.0
    return micro, macro


def ref_precision_at_k(scores, is_true, k):
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    k = min(k, len(scores))
    return sum(is_true[i] for i in ranked[:k]) / k


def ref_purity(assign, truth):
    clusters = {}
    for a, t in zip(assign, truth):
        clusters.setdefault(a, []).append(t)
    return sum(Counter(v).most_common(1)[0][1] for v in clusters.values()) / len(assign)


def ref_nmi(assign, truth):
    n = len(assign)
    pa, pt, pj = Counter(assign), Counter(truth), Counter(zip(assign, truth))
    ha = -sum(c / n * math.log(c / n) for c in pa.values())
    ht = -sum(c / n * math.log(c / n) for c in pt.values())
    if ha == 0 or ht == 0:
        return 0.0
    mi = sum(c / n * math.log((c / n) / (pa[a] / n * pt[t] / n)) for (a, t), c in pj.items())
    return mi / math.sqrt(ha * ht)


# -- examples ------------------------------------------------------------------

def test_f1_examples():
    assert micro_macro_f1([0, 1, 1, 0], [0, 1, 1, 0]) == (1.0, 1.0)
    micro, macro = micro_macro_f1([0, 0, 0, 0], [0, 0, 0, 1], 2)
    assert micro == pytest.approx(0.75, abs=1e-15) and macro == pytest.approx(3 / 7, abs=1e-15)
    micro, macro = micro_macro_f1([0, 0, 0, 0], [0, 0, 1, 1], 2)
    assert micro == pytest.approx(0.5) and macro == pytest.approx(1 / 3)
    # truth {X, Y}, pred {X, Z}: one TP, one FP, one FN
    micro, _ = micro_macro_f1([(0, 2)], [(0, 1)], 3)
    assert micro == pytest.approx(2 * 1 / (2 * 1 + 1 + 1))


def test_f1_errors():
    with pytest.raises(ValueError):
        micro_macro_f1([], [])
    with pytest.raises(ValueError):
        micro_macro_f1([0], [0, 1])


def test_indicator():
    m = indicator([(0, 2), 1, ()], 3)
    assert m.tolist() == [[True, False, True], [False, True, False], [False, False, False]]


def test_precision_examples():
    prec, clamped = precision_at_k([5, 4, 3, 2, 1, 0], [1, 1, 1, 0, 0, 0], [1, 2, 3])
    assert prec == {1: 1.0, 2: 1.0, 3: 1.0} and clamped == []
    rng = np.random.default_rng(0)
    prec, _ = precision_at_k(rng.random(40), np.arange(40) % 2 == 0, [40])
    assert prec[40] == 0.5
    # hand-ranked: scores 0.9 F, 0.8 T, 0.8 F, 0.7 T, 0.1 T, 0.0 F -> top 3 = {F, T, F}
    scores = [0.9, 0.8, 0.8, 0.7, 0.1, 0.0]
    truth = [False, True, False, True, True, False]
    prec, _ = precision_at_k(scores, truth, [3])
    assert prec[3] == pytest.approx(1 / 3)
    assert prec[3] == ref_precision_at_k(scores, truth, 3)


def test_precision_clamp():
    prec, clamped = precision_at_k([1, 2, 3], [1, 0, 0], [2, 10])
    assert clamped == [10] and prec[10] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        precision_at_k([1.0], [True], [0])


def test_clustering_examples():
    # clusters {a,b},{c,d}; classes a:X b:Y c:Y d:Y
    assert purity([0, 0, 1, 1], ["X", "Y", "Y", "Y"]) == 0.75
    assert nmi([0, 0, 1, 1, 2], [5, 5, 6, 6, 7]) == pytest.approx(1.0)
    assert nmi([0, 1, 0, 1], [0, 0, 0, 0]) == 0.0
    assert purity([0, 1, 0, 1], [0, 0, 0, 0]) == 1.0
    with pytest.raises(ValueError):
        purity([0, 1], [0])


# -- random sweeps ---------------------------------------------------------------

def random_instance(rng):
    n = int(rng.integers(1, 51))
    c = int(rng.integers(1, 7))
    return n, c


@pytest.mark.parametrize("multilabel", [False, True])
def test_f1_oracle_sweep(multilabel):
    rng = np.random.default_rng(1 + multilabel)
    for _ in range(100):
        n, c = random_instance(rng)
        if multilabel:
            truth = [tuple(np.nonzero(rng.random(c) < 0.4)[0]) for _ in range(n)]
            pred = [tuple(np.nonzero(rng.random(c) < 0.4)[0]) for _ in range(n)]
        else:
            truth = [(int(x),) for x in rng.integers(0, c, n)]
            pred = [(int(x),) for x in rng.integers(0, c, n)]
        got = micro_macro_f1(pred, truth, c)
        want = ref_f1(pred, truth, c)
        assert abs(got[0] - want[0]) < 1e-9 and abs(got[1] - want[1]) < 1e-9


def test_precision_oracle_sweep():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 51))
        # coarse scores force ties
        scores = rng.integers(0, 6, n).astype(float)
        truth = rng.random(n) < 0.5
        ks = sorted(set(int(k) for k in rng.integers(1, 60, 3)))
        got, _ = precision_at_k(scores, truth, ks)
        for k in ks:
            assert abs(got[k] - ref_precision_at_k(scores, truth, k)) < 1e-9


def test_cluster_metric_oracle_sweep():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n, c = random_instance(rng)
        a = rng.integers(0, int(rng.integers(1, 7)), n)
        t = rng.integers(0, c, n)
        assert abs(purity(a, t) - ref_purity(a, t)) < 1e-9
        assert abs(nmi(a, t) - ref_nmi(a, t)) < 1e-9
        if len(set(a)) > 1 and len(set(t)) > 1:
            skl = normalized_mutual_info_score(t, a, average_method="geometric")
            assert abs(nmi(a, t) - skl) < 1e-9


def test_thirty_point_fixture():
    rng = np.random.default_rng(30)
    a, t = rng.integers(0, 4, 30), rng.integers(0, 3, 30)
    assert abs(purity(a, t) - ref_purity(a, t)) < 1e-9
    assert abs(nmi(a, t) - ref_nmi(a, t)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=50))
def test_metrics_in_unit_interval(rows):
    a, t = zip(*rows)
    assert 0 <= purity(a, t) <= 1
    assert 0 <= nmi(a, t) <= 1
    micro, macro = micro_macro_f1(list(a), list(t), 6)
    assert 0 <= micro <= 1 and 0 <= macro <= 1
    prec, _ = precision_at_k(np.array(a, float), np.array(t) > 2, [1, 5, 50])
    assert all(0 <= p <= 1 for p in prec.values())
