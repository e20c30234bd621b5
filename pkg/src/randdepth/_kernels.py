"""Compiled inner loops for split search, tree growth and routing.

Rows are addressed by their index into the full dataset. A node owns the
segment ``[start, end)`` of every per-feature order array ``seg[f]``; each
segment lists the node's rows sorted by feature ``f``. Splitting a node
stable-partitions every feature's segment, so sort order is never
recomputed below the root.
"""

import numpy as np
from numba import njit

# Reductions within this fraction of the node SSE count as ties (the
# earlier candidate wins) and do not count as improvements.
TIE_RTOL = 1e-12


@njit(cache=True, nogil=True)
def search_node(xt, y, w, seg, start, end, cand, min_leaf, total_w, mean, node_sse):
    """Best (feature, left-count) split of one node.

    Returns ``(feature, k, reduction)`` where the left child is
    ``seg[feature, start:start + k]``; ``feature == -1`` means no split
    strictly reduces the SSE.
    """
    tol = TIE_RTOL * node_sse
    best_f = -1
    best_k = 0
    best_red = 0.0
    for c in range(cand.shape[0]):
        f = cand[c]
        cw = 0.0
        cs = 0.0
        for i in range(start, end - 1):
            r = seg[f, i]
            cw += w[r]
            cs += w[r] * (y[r] - mean)
            if xt[f, r] == xt[f, seg[f, i + 1]]:
                continue
            if cw < min_leaf:
                continue
            rw = total_w - cw
            if rw < min_leaf:
                break
            red = cs * cs * total_w / (cw * rw)
            if red > best_red + tol:
                best_red = red
                best_f = f
                best_k = i + 1 - start
    return best_f, best_k, best_red


@njit(cache=True, nogil=True)
def sorted_segments(order, counts):
    """Restrict the global per-feature order to rows with nonzero count."""
    p, n = order.shape
    n_s = 0
    for i in range(n):
        if counts[i] > 0:
            n_s += 1
    seg = np.empty((p, n_s), dtype=np.int64)
    for f in range(p):
        k = 0
        for i in range(n):
            r = order[f, i]
            if counts[r] > 0:
                seg[f, k] = r
                k += 1
    return seg


@njit(cache=True, nogil=True)
def split_threshold(lo, hi):
    # midpoint, kept strictly below hi so that lo routes left and hi right
    s = 0.5 * (lo + hi)
    if s >= hi or s < lo:
        s = lo
    return s


@njit(cache=True, nogil=True)
def grow(xt, y, counts, order, depth_budget, min_leaf, m_try, seed):
    """Grow one regression tree on the rows with ``counts > 0``.

    ``counts`` are row multiplicities (bootstrap duplicates weigh more).
    Returns flat node arrays ``(feature, threshold, left, right, value)``;
    leaves carry ``feature == -1``.
    """
    p, n = xt.shape
    np.random.seed(seed)
    seg = sorted_segments(order, counts)
    n_s = seg.shape[1]
    w = counts.astype(np.float64)

    if depth_budget < 30:
        max_nodes = min(2 * n_s - 1, 2 ** (depth_budget + 1) - 1)
    else:
        max_nodes = 2 * n_s - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_start = np.empty(max_nodes, dtype=np.int64)
    st_end = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)
    st_stat = np.zeros(max_nodes, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_s
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    perm = np.arange(p)
    cand_buf = np.empty(p, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n_s, dtype=np.int64)

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        sf = st_stat[top]

        tw = 0.0
        ts = 0.0
        for i in range(start, end):
            r = seg[sf, i]
            tw += w[r]
            ts += w[r] * y[r]
        mean = ts / tw
        value[node] = mean
        if depth >= depth_budget or tw < 2.0 * min_leaf:
            continue
        sse = 0.0
        for i in range(start, end):
            r = seg[sf, i]
            d = y[r] - mean
            sse += w[r] * d * d
        if sse <= 0.0:
            continue

        if m_try < p:
            for i in range(m_try):
                j = i + np.random.randint(p - i)
                t = perm[i]
                perm[i] = perm[j]
                perm[j] = t
            for i in range(m_try):
                cand_buf[i] = perm[i]
            cand = np.sort(cand_buf[:m_try])
        else:
            cand = perm.copy()
            cand.sort()

        f, k, red = search_node(xt, y, w, seg, start, end, cand, min_leaf, tw, mean, sse)
        if f < 0:
            continue

        mid = start + k
        lo = xt[f, seg[f, mid - 1]]
        hi = xt[f, seg[f, mid]]
        # children that can never split only need their row set, which
        # seg[f] already holds contiguously; skip the full partition
        if depth + 1 >= depth_budget:
            stat_f = f
        else:
            stat_f = 0
            for i in range(start, mid):
                goes_left[seg[f, i]] = True
            for i in range(mid, end):
                goes_left[seg[f, i]] = False
            for g in range(p):
                if g == f:
                    continue
                a = 0
                b = k
                for i in range(start, end):
                    r = seg[g, i]
                    if goes_left[r]:
                        buf[a] = r
                        a += 1
                    else:
                        buf[b] = r
                        b += 1
                for i in range(end - start):
                    seg[g, start + i] = buf[i]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = split_threshold(lo, hi)
        left[node] = lc
        right[node] = rc
        # right pushed first so the left subtree is grown first
        st_node[top] = rc
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        st_stat[top] = stat_f
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        st_stat[top] = stat_f
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def route(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def warmup() -> None:
    """Compile (or load) the kernel specializations used in practice.

    Dataset arrays are read-only while residual targets and query copies are
    writable; each combination is a separate numba specialization.
    """
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 2))
    xt = np.ascontiguousarray(X.T)
    order = np.argsort(xt, axis=1, kind="stable").astype(np.int64)
    counts = np.ones(8, dtype=np.int64)
    xt.setflags(write=False)
    order.setflags(write=False)
    for writable in (True, False):
        y = rng.normal(size=8)
        y.setflags(write=writable)
        tree = grow(xt, y, counts, order, 2, 1.0, 1, 0)
        for a in tree:
            a.setflags(write=False)
        Xq = X.copy()
        Xq.setflags(write=writable)
        route(tree[0], tree[1], tree[2], tree[3], tree[4], Xq)
