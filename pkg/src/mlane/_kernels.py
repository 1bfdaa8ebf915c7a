"""Numba kernels for the hot loops: BFS, walk sampling and SGNS updates.

Random numbers come from a splitmix64 stream keyed by integers (seed, node,
walk, ...), so results do not depend on the order in which walks are run.
"""
import numpy as np
from numba import njit, prange

UNREACHED = -1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

FORWARD, SAME, BACKWARD = 0, 1, 2


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key(seed, a, b):
    """Start state of the stream identified by (seed, a, b)."""
    h = mix64(np.uint64(seed) + _GOLDEN)
    h = mix64(h ^ (np.uint64(a) + _GOLDEN))
    h = mix64(h ^ (np.uint64(b) + _GOLDEN))
    return h


@njit(cache=True, inline="always")
def next_uniform(state):
    """Advance a splitmix64 state; returns (new_state, u) with u in [0, 1)."""
    state = state + _GOLDEN
    u = float(mix64(state) >> _S11) * _INV53
    return state, u


@njit(cache=True)
def bfs(indptr, indices, source, dist):
    n = indptr.shape[0] - 1
    for i in range(n):
        dist[i] = UNREACHED
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 1
    queue[0] = source
    dist[source] = 0
    max_d = 0
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u]
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            if dist[w] == UNREACHED:
                dist[w] = du + 1
                if du + 1 > max_d:
                    max_d = du + 1
                queue[tail] = w
                tail += 1
    return max_d


@njit(cache=True, inline="always")
def _pick(indptr, indices, dist_row, cur, delta, count, u):
    """The floor(u * count)-th neighbour of ``cur`` whose distance delta is ``delta``."""
    target = int(u * count)
    if target >= count:
        target = count - 1
    dc = dist_row[cur]
    seen = 0
    for k in range(indptr[cur], indptr[cur + 1]):
        w = indices[k]
        if dist_row[w] - dc == delta:
            if seen == target:
                return w
            seen += 1
    return -1


@njit(cache=True, parallel=True)
def policy_walks(indptr, indices, dist, probs, sources, n_walks, length, seed,
                 walks, steps_d, steps_a, steps_fb, steps_mask, lengths):
    """K policy-driven walks per source.

    ``dist`` is the (n, n) matrix of BFS distances from each source, ``probs``
    the (n, D, 3) action table of the policy.  Row ``r = i * n_walks + k``
    of the outputs holds walk ``k`` of ``sources[i]``.
    """
    total = sources.shape[0] * n_walks
    for r in prange(total):
        i = r // n_walks
        k = r % n_walks
        v = sources[i]
        row = dist[v]
        state = stream_key(seed, v, k)
        walks[r, 0] = v
        cur = v
        n_nodes = 1
        if indptr[v + 1] > indptr[v]:
            for j in range(length):
                dc = row[cur]
                nf = 0
                ns = 0
                nb = 0
                for q in range(indptr[cur], indptr[cur + 1]):
                    delta = row[indices[q]] - dc
                    if delta == 1:
                        nf += 1
                    elif delta == 0:
                        ns += 1
                    else:
                        nb += 1
                mask = 0
                if nf > 0:
                    mask |= 1
                if ns > 0:
                    mask |= 2
                if nb > 0:
                    mask |= 4
                pf = probs[v, dc, 0]
                ps = probs[v, dc, 1]
                pb = probs[v, dc, 2]
                state, u = next_uniform(state)
                if u < pf:
                    a = FORWARD
                elif u < pf + ps:
                    a = SAME
                else:
                    a = BACKWARD
                fallback = False
                if (mask >> a) & 1 == 0:
                    fallback = True
                    tf = pf if nf > 0 else 0.0
                    ts = ps if ns > 0 else 0.0
                    tb = pb if nb > 0 else 0.0
                    if tf + ts + tb <= 0.0:
                        tf = 1.0 if nf > 0 else 0.0
                        ts = 1.0 if ns > 0 else 0.0
                        tb = 1.0 if nb > 0 else 0.0
                    state, u = next_uniform(state)
                    u = u * (tf + ts + tb)
                    if u < tf:
                        a = FORWARD
                    elif u < tf + ts:
                        a = SAME
                    else:
                        a = BACKWARD
                    if (mask >> a) & 1 == 0:
                        # u landed on the upper edge by rounding
                        a = FORWARD if nf > 0 else (SAME if ns > 0 else BACKWARD)
                if a == FORWARD:
                    cnt = nf
                    delta = 1
                elif a == SAME:
                    cnt = ns
                    delta = 0
                else:
                    cnt = nb
                    delta = -1
                state, u = next_uniform(state)
                nxt = _pick(indptr, indices, row, cur, delta, cnt, u)
                steps_d[r, j] = dc
                steps_a[r, j] = a
                steps_fb[r, j] = fallback
                steps_mask[r, j] = mask
                walks[r, j + 1] = nxt
                cur = nxt
                n_nodes += 1
        lengths[r] = n_nodes


@njit(cache=True, inline="always")
def _is_neighbor(indptr, indices, u, w):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        x = indices[mid]
        if x == w:
            return True
        if x < w:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True, parallel=True)
def pq_walks(indptr, indices, sources, n_walks, length, p, q, seed, walks, lengths):
    """Second-order (return 1/p, in-out 1/q) walks; p = q = 1 is uniform."""
    total = sources.shape[0] * n_walks
    uniform = p == 1.0 and q == 1.0
    for r in prange(total):
        i = r // n_walks
        k = r % n_walks
        v = sources[i]
        state = stream_key(seed, v, k)
        walks[r, 0] = v
        prev = -1
        cur = v
        n_nodes = 1
        for j in range(length):
            lo = indptr[cur]
            hi = indptr[cur + 1]
            deg = hi - lo
            if deg == 0:
                break
            state, u = next_uniform(state)
            if prev < 0 or uniform:
                t = int(u * deg)
                if t >= deg:
                    t = deg - 1
                nxt = indices[lo + t]
            else:
                total_w = 0.0
                for s in range(lo, hi):
                    w = indices[s]
                    if w == prev:
                        total_w += 1.0 / p
                    elif _is_neighbor(indptr, indices, prev, w):
                        total_w += 1.0
                    else:
                        total_w += 1.0 / q
                target = u * total_w
                acc = 0.0
                nxt = indices[hi - 1]
                for s in range(lo, hi):
                    w = indices[s]
                    if w == prev:
                        acc += 1.0 / p
                    elif _is_neighbor(indptr, indices, prev, w):
                        acc += 1.0
                    else:
                        acc += 1.0 / q
                    if target < acc:
                        nxt = w
                        break
            walks[r, j + 1] = nxt
            prev = cur
            cur = nxt
            n_nodes += 1
        lengths[r] = n_nodes


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def sgns_pair_update(syn0, syn1, center, context, negatives, lr, work):
    """One SGD step on -log s(z_c.z'_o) - sum log s(-z_c.z'_n).

    Negatives equal to ``context`` are skipped.  Returns the pair loss
    evaluated before the step.
    """
    m = syn0.shape[1]
    for t in range(m):
        work[t] = 0.0
    loss = 0.0
    for idx in range(-1, negatives.shape[0]):
        if idx < 0:
            o = context
            label = 1.0
        else:
            o = negatives[idx]
            if o == context:
                continue
            label = 0.0
        dot = 0.0
        for t in range(m):
            dot += syn0[center, t] * syn1[o, t]
        s = _sigmoid(dot)
        if label > 0.0:
            loss -= np.log(max(s, 1e-300))
        else:
            loss -= np.log(max(1.0 - s, 1e-300))
        g = (label - s) * lr
        for t in range(m):
            work[t] += g * syn1[o, t]
            syn1[o, t] += g * syn0[center, t]
    for t in range(m):
        syn0[center, t] += work[t]
    return loss


@njit(cache=True, inline="always")
def _draw_negative(cum, u):
    target = u * cum[cum.shape[0] - 1]
    lo = 0
    hi = cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > target:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _train_sequence(syn0, syn1, seq, n_tok, window, cum, n_neg, lr0, lr_min,
                    done, total, state, work, negs):
    loss = 0.0
    pairs = 0
    for i in range(n_tok):
        c = seq[i]
        lo = max(0, i - window)
        hi = min(n_tok, i + window + 1)
        for j in range(lo, hi):
            if j == i:
                continue
            for t in range(n_neg):
                state, u = next_uniform(state)
                negs[t] = _draw_negative(cum, u)
            frac = (done + pairs) / total
            lr = lr0 - (lr0 - lr_min) * frac
            if lr < lr_min:
                lr = lr_min
            loss += sgns_pair_update(syn0, syn1, c, seq[j], negs, lr, work)
            pairs += 1
    return loss, pairs, state


@njit(cache=True)
def _subsample(seq, n_tok, keep, state, out):
    kept = 0
    for i in range(n_tok):
        state, u = next_uniform(state)
        if u < keep[seq[i]]:
            out[kept] = seq[i]
            kept += 1
    return kept, state


@njit(cache=True)
def sgns_epoch(syn0, syn1, walks, lengths, order, window, cum, n_neg, lr0,
               lr_min, done, total, seed, epoch, keep, use_keep):
    """One serial pass over the walks in ``order``; returns (loss, pairs)."""
    m = syn0.shape[1]
    work = np.empty(m)
    negs = np.empty(n_neg, dtype=np.int64)
    buf = np.empty(walks.shape[1], dtype=walks.dtype)
    loss = 0.0
    pairs = 0
    for r in range(order.shape[0]):
        w = order[r]
        state = stream_key(seed, epoch, w)
        n_tok = lengths[w]
        seq = walks[w]
        if use_keep:
            n_tok, state = _subsample(seq, n_tok, keep, state, buf)
            seq = buf
        sl, sp, state = _train_sequence(syn0, syn1, seq, n_tok, window, cum, n_neg,
                                        lr0, lr_min, done + pairs, total, state, work, negs)
        loss += sl
        pairs += sp
    return loss, pairs


@njit(cache=True, parallel=True)
def sgns_epoch_hogwild(syn0, syn1, walks, lengths, order, window, cum, n_neg, lr0,
                       lr_min, done, total, seed, epoch, keep, use_keep):
    """Lock-free parallel variant of :func:`sgns_epoch` (not reproducible)."""
    m = syn0.shape[1]
    n_w = order.shape[0]
    losses = np.zeros(n_w)
    counts = np.zeros(n_w, dtype=np.int64)
    per_walk = np.empty(n_w, dtype=np.int64)
    for r in range(n_w):
        lw = lengths[order[r]]
        c = 0
        for i in range(lw):
            c += min(lw, i + window + 1) - max(0, i - window) - 1
        per_walk[r] = c
    offsets = np.cumsum(per_walk) - per_walk
    for r in prange(n_w):
        work = np.empty(m)
        negs = np.empty(n_neg, dtype=np.int64)
        buf = np.empty(walks.shape[1], dtype=walks.dtype)
        w = order[r]
        state = stream_key(seed, epoch, w)
        n_tok = lengths[w]
        seq = walks[w]
        if use_keep:
            n_tok, state = _subsample(seq, n_tok, keep, state, buf)
            seq = buf
        sl, sp, state = _train_sequence(syn0, syn1, seq, n_tok, window, cum, n_neg,
                                        lr0, lr_min, done + offsets[r], total, state, work, negs)
        losses[r] = sl
        counts[r] = sp
    return losses.sum(), counts.sum()
