"""Numba kernels backing the hot paths of graph construction and search.

Everything here operates on flat numpy arrays in a *local* index space
(0..m-1 for the m vertices a given operation touches); callers translate
to and from global dataset ids. Neighbor lists are stored row-wise:

    ids    int32  (m, cap)   padded with -1
    dists  float64 (m, cap)  padded with +inf
    flags  bool   (m, cap)   "new" markers for descent bookkeeping
    sizes  int32  (m,)

Rows are kept sorted ascending by (dist, id) with no duplicate ids.
All distance accumulation is float64 so the scalar helpers here are the
single source of truth for metric values across the package.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

TAG_L1 = 0
TAG_L2 = 1
TAG_COSINE = 2
TAG_JACCARD = 3

MODE_ALL = 0          # any pair with at least one new member
MODE_CROSS = 1        # additionally: members from different label sets
MODE_CROSS_OR_S2 = 2  # additionally: different sets, or both in set 1

_U64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_MIX2 = np.uint64(0x94D049BB133111EB)


# ---------------------------------------------------------------------------
# scalar metrics
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def dense_dist(a, b, tag):
    """Distance between two dense float32 records (float64 accumulation).

    L2 is returned squared; cosine is 1 - cos similarity, clamped at 0.
    """
    n = a.shape[0]
    if tag == TAG_L1:
        acc = 0.0
        for t in range(n):
            acc += abs(np.float64(a[t]) - np.float64(b[t]))
        return acc
    elif tag == TAG_L2:
        acc = 0.0
        for t in range(n):
            diff = np.float64(a[t]) - np.float64(b[t])
            acc += diff * diff
        return acc
    else:
        dot = 0.0
        na = 0.0
        nb = 0.0
        for t in range(n):
            x = np.float64(a[t])
            y = np.float64(b[t])
            dot += x * y
            na += x * x
            nb += y * y
        if na == 0.0 or nb == 0.0:
            # zero-norm convention: identical zeros coincide, else maximal
            return 0.0 if na == nb else 1.0
        if dot > 0.0 and dot * dot >= na * nb:
            # Cauchy-Schwarz equality: parallel vectors (exact for a == b)
            return 0.0
        d = 1.0 - dot / (math.sqrt(na) * math.sqrt(nb))
        if d < 0.0:
            return 0.0
        return d


@njit(cache=True, inline="always")
def jaccard_dist(a, b):
    """Jaccard distance between two strictly-ascending int32 id arrays."""
    na = a.shape[0]
    nb = b.shape[0]
    i = 0
    j = 0
    inter = 0
    while i < na and j < nb:
        va = a[i]
        vb = b[j]
        if va == vb:
            inter += 1
            i += 1
            j += 1
        elif va < vb:
            i += 1
        else:
            j += 1
    union = na + nb - inter
    if union == 0:
        return 0.0
    return 1.0 - inter / union


# ---------------------------------------------------------------------------
# batched distances
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def pair_dists_dense(data, pa, pb, tag):
    m = pa.shape[0]
    out = np.empty(m, dtype=np.float64)
    for t in prange(m):
        out[t] = dense_dist(data[pa[t]], data[pb[t]], tag)
    return out


@njit(cache=True, parallel=True)
def pair_dists_sparse(indptr, items, pa, pb):
    m = pa.shape[0]
    out = np.empty(m, dtype=np.float64)
    for t in prange(m):
        a = pa[t]
        b = pb[t]
        out[t] = jaccard_dist(
            items[indptr[a]:indptr[a + 1]], items[indptr[b]:indptr[b + 1]]
        )
    return out


@njit(cache=True, parallel=True)
def query_dists_dense(data, q, ids, tag):
    m = ids.shape[0]
    out = np.empty(m, dtype=np.float64)
    for t in prange(m):
        out[t] = dense_dist(q, data[ids[t]], tag)
    return out


@njit(cache=True, parallel=True)
def query_dists_sparse(indptr, items, q_items, ids):
    m = ids.shape[0]
    out = np.empty(m, dtype=np.float64)
    for t in prange(m):
        i = ids[t]
        out[t] = jaccard_dist(q_items, items[indptr[i]:indptr[i + 1]])
    return out


# ---------------------------------------------------------------------------
# bounded sorted insertion
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _insert(ids, dists, flags, sizes, cap, row, nid, nd):
    """Insert (nid, nd) into a sorted row; returns 1 if accepted.

    Rejects duplicates and, when full, anything not strictly closer than
    the worst entry. Ties in distance order by ascending id.
    """
    if cap == 0:
        return 0
    sz = sizes[row]
    if sz == cap and nd >= dists[row, sz - 1]:
        return 0
    for t in range(sz):
        if ids[row, t] == nid:
            return 0
    pos = sz
    for t in range(sz):
        dt = dists[row, t]
        if nd < dt or (nd == dt and nid < ids[row, t]):
            pos = t
            break
    if sz == cap:
        last = cap - 1
    else:
        last = sz
        sizes[row] = sz + 1
    for t in range(last, pos, -1):
        ids[row, t] = ids[row, t - 1]
        dists[row, t] = dists[row, t - 1]
        flags[row, t] = flags[row, t - 1]
    ids[row, pos] = nid
    dists[row, pos] = nd
    flags[row, pos] = True
    return 1


@njit(cache=True)
def apply_updates(ids, dists, flags, sizes, cap, pa, pb, pd):
    """Apply update_nn both ways for each scored pair; returns accepted count.

    Sequential in pair order so runs are reproducible at any thread count.
    """
    c = 0
    for t in range(pa.shape[0]):
        c += _insert(ids, dists, flags, sizes, cap, pa[t], pb[t], pd[t])
        c += _insert(ids, dists, flags, sizes, cap, pb[t], pa[t], pd[t])
    return c


@njit(cache=True)
def apply_updates_directed(ids, dists, flags, sizes, cap, rows, nids, nds):
    """Insert each (nids[t], nds[t]) into rows[t] only; returns accepted count."""
    c = 0
    for t in range(rows.shape[0]):
        c += _insert(ids, dists, flags, sizes, cap, rows[t], nids[t], nds[t])
    return c


@njit(cache=True, parallel=True)
def apply_updates_grouped(ids, dists, flags, sizes, cap, pa, pb, pd):
    """Row-grouped equivalent of apply_updates.

    Directed updates are counting-sorted by target row (stable, so each
    row sees its updates in the same order as the sequential reference)
    and rows are then processed in parallel. Results and accepted counts
    are identical to apply_updates; this version is cache-friendly when
    many pairs hit the same rows.
    """
    npairs = pa.shape[0]
    n = ids.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for t in range(npairs):
        counts[pa[t] + 1] += 1
        counts[pb[t] + 1] += 1
    indptr = np.cumsum(counts)
    src = np.empty(indptr[n], dtype=np.int32)
    dd = np.empty(indptr[n], dtype=np.float64)
    fill = indptr[:n].copy()
    for t in range(npairs):
        a = pa[t]
        b = pb[t]
        p = fill[a]
        src[p] = pb[t]
        dd[p] = pd[t]
        fill[a] = p + 1
        p = fill[b]
        src[p] = pa[t]
        dd[p] = pd[t]
        fill[b] = p + 1
    acc = 0
    for r in prange(n):
        local = 0
        for s in range(indptr[r], indptr[r + 1]):
            local += _insert(ids, dists, flags, sizes, cap, r, src[s], dd[s])
        acc += local
    return acc


# ---------------------------------------------------------------------------
# reverse graph
# ---------------------------------------------------------------------------


@njit(cache=True)
def reverse_csr(ids, flags, sizes):
    """CSR reverse adjacency; each reverse edge carries the forward new-flag."""
    n = ids.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        for t in range(sizes[i]):
            counts[ids[i, t] + 1] += 1
    indptr = np.cumsum(counts)
    rids = np.empty(indptr[n], dtype=np.int32)
    rnew = np.empty(indptr[n], dtype=np.bool_)
    fill = indptr[:n].copy()
    for i in range(n):
        for t in range(sizes[i]):
            j = ids[i, t]
            p = fill[j]
            rids[p] = i
            rnew[p] = flags[i, t]
            fill[j] = p + 1
    return indptr, rids, rnew


@njit(cache=True)
def reverse_csr_with_dists(ids, dists, sizes):
    """CSR reverse adjacency carrying the forward edge distances."""
    n = ids.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        for t in range(sizes[i]):
            counts[ids[i, t] + 1] += 1
    indptr = np.cumsum(counts)
    rids = np.empty(indptr[n], dtype=np.int32)
    rdists = np.empty(indptr[n], dtype=np.float64)
    fill = indptr[:n].copy()
    for i in range(n):
        for t in range(sizes[i]):
            j = ids[i, t]
            p = fill[j]
            rids[p] = i
            rdists[p] = dists[i, t]
            fill[j] = p + 1
    return indptr, rids, rdists


@njit(cache=True, inline="always")
def _mix_state(state):
    state = state + _U64_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _U64_MIX1
    z = (z ^ (z >> np.uint64(27))) * _U64_MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, parallel=True)
def assemble_neighborhoods(ids, flags, sizes, rindptr, rids, rnew, rev_cap, seed):
    """Joined per-vertex neighborhoods: forward list plus capped reverse list.

    Reverse lists longer than rev_cap are uniformly subsampled (splitmix64
    keyed on (seed, vertex), so results are thread-count independent).
    Members are deduplicated with new-flags OR-ed together.
    """
    n = ids.shape[0]
    cap = ids.shape[1]
    width = cap + rev_cap
    nbh = np.full((n, width), -1, dtype=np.int32)
    nnew = np.zeros((n, width), dtype=np.bool_)
    nlen = np.zeros(n, dtype=np.int32)
    for u in prange(n):
        buf_id = np.empty(width, dtype=np.int32)
        buf_new = np.empty(width, dtype=np.bool_)
        m = 0
        for t in range(sizes[u]):
            buf_id[m] = ids[u, t]
            buf_new[m] = flags[u, t]
            m += 1
        lo = rindptr[u]
        deg = rindptr[u + 1] - lo
        if deg <= rev_cap:
            for t in range(deg):
                buf_id[m] = rids[lo + t]
                buf_new[m] = rnew[lo + t]
                m += 1
        else:
            # partial Fisher-Yates over a local index buffer
            idx = np.empty(deg, dtype=np.int64)
            for t in range(deg):
                idx[t] = t
            state = np.uint64(seed) ^ (np.uint64(u + 1) * _U64_GAMMA)
            state, _ = _mix_state(state)
            for t in range(rev_cap):
                state, z = _mix_state(state)
                r = t + np.int64(z % np.uint64(deg - t))
                tmp = idx[t]
                idx[t] = idx[r]
                idx[r] = tmp
                p = lo + idx[t]
                buf_id[m] = rids[p]
                buf_new[m] = rnew[p]
                m += 1
        # insertion sort by id, then compact duplicates OR-ing flags
        for a in range(1, m):
            ki = buf_id[a]
            kn = buf_new[a]
            b = a - 1
            while b >= 0 and buf_id[b] > ki:
                buf_id[b + 1] = buf_id[b]
                buf_new[b + 1] = buf_new[b]
                b -= 1
            buf_id[b + 1] = ki
            buf_new[b + 1] = kn
        w = 0
        for a in range(m):
            if w > 0 and nbh[u, w - 1] == buf_id[a]:
                if buf_new[a]:
                    nnew[u, w - 1] = True
            else:
                nbh[u, w] = buf_id[a]
                nnew[u, w] = buf_new[a]
                w += 1
        nlen[u] = w
    return nbh, nnew, nlen


# ---------------------------------------------------------------------------
# candidate pair generation
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _pair_admissible(na, nb, la, lb, mode):
    if not (na or nb):
        return False
    if mode == MODE_CROSS:
        return la != lb
    if mode == MODE_CROSS_OR_S2:
        return la != lb or (la == 1 and lb == 1)
    return True


@njit(cache=True, parallel=True)
def count_pairs(nbh, nnew, nlen, labels, mode, lo, hi):
    counts = np.zeros(hi - lo, dtype=np.int64)
    for u in prange(lo, hi):
        c = 0
        w = nlen[u]
        for p in range(w):
            ip = nbh[u, p]
            for q in range(p + 1, w):
                iq = nbh[u, q]
                if _pair_admissible(
                    nnew[u, p], nnew[u, q], labels[ip], labels[iq], mode
                ):
                    c += 1
        counts[u - lo] = c
    return counts


@njit(cache=True, parallel=True)
def fill_pairs(nbh, nnew, nlen, labels, mode, lo, hi, offsets, total):
    pa = np.empty(total, dtype=np.int32)
    pb = np.empty(total, dtype=np.int32)
    for u in prange(lo, hi):
        pos = offsets[u - lo]
        w = nlen[u]
        for p in range(w):
            ip = nbh[u, p]
            for q in range(p + 1, w):
                iq = nbh[u, q]
                if _pair_admissible(
                    nnew[u, p], nnew[u, q], labels[ip], labels[iq], mode
                ):
                    pa[pos] = ip
                    pb[pos] = iq
                    pos += 1
    return pa, pb


# ---------------------------------------------------------------------------
# brute force oracles
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def bf_graph_dense(data, k, tag):
    """Exact k-NN lists via triangular scan; each pair evaluated once.

    wbuf caches each row's worst kept distance so the merge loop can skip
    most insertion attempts with one streaming comparison.
    """
    n = data.shape[0]
    ids = np.full((n, k), -1, dtype=np.int32)
    dists = np.full((n, k), np.inf, dtype=np.float64)
    flags = np.zeros((n, k), dtype=np.bool_)
    sizes = np.zeros(n, dtype=np.int32)
    dbuf = np.empty(n, dtype=np.float64)
    wbuf = np.full(n, np.inf, dtype=np.float64)
    for j in range(n):
        for i in prange(j):
            dbuf[i] = dense_dist(data[i], data[j], tag)
        for i in range(j):
            d = dbuf[i]
            _insert(ids, dists, flags, sizes, k, j, i, d)
            if d < wbuf[i]:
                _insert(ids, dists, flags, sizes, k, i, j, d)
                if sizes[i] == k:
                    wbuf[i] = dists[i, k - 1]
    return ids, dists, sizes


@njit(cache=True, parallel=True)
def bf_graph_sparse(indptr, items, n, k):
    ids = np.full((n, k), -1, dtype=np.int32)
    dists = np.full((n, k), np.inf, dtype=np.float64)
    flags = np.zeros((n, k), dtype=np.bool_)
    sizes = np.zeros(n, dtype=np.int32)
    dbuf = np.empty(n, dtype=np.float64)
    wbuf = np.full(n, np.inf, dtype=np.float64)
    for j in range(n):
        rj = items[indptr[j]:indptr[j + 1]]
        for i in prange(j):
            dbuf[i] = jaccard_dist(items[indptr[i]:indptr[i + 1]], rj)
        for i in range(j):
            d = dbuf[i]
            _insert(ids, dists, flags, sizes, k, j, i, d)
            if d < wbuf[i]:
                _insert(ids, dists, flags, sizes, k, i, j, d)
                if sizes[i] == k:
                    wbuf[i] = dists[i, k - 1]
    return ids, dists, sizes


@njit(cache=True, parallel=True)
def bf_queries_dense(data, queries, k, tag):
    nq = queries.shape[0]
    n = data.shape[0]
    ids = np.full((nq, k), -1, dtype=np.int32)
    dists = np.full((nq, k), np.inf, dtype=np.float64)
    flags = np.zeros((nq, k), dtype=np.bool_)
    sizes = np.zeros(nq, dtype=np.int32)
    for q in prange(nq):
        for i in range(n):
            d = dense_dist(queries[q], data[i], tag)
            _insert(ids, dists, flags, sizes, k, q, i, d)
    return ids, dists, sizes


@njit(cache=True, parallel=True)
def bf_queries_sparse(indptr, items, q_indptr, q_items, n, k):
    nq = q_indptr.shape[0] - 1
    ids = np.full((nq, k), -1, dtype=np.int32)
    dists = np.full((nq, k), np.inf, dtype=np.float64)
    flags = np.zeros((nq, k), dtype=np.bool_)
    sizes = np.zeros(nq, dtype=np.int32)
    for q in prange(nq):
        rq = q_items[q_indptr[q]:q_indptr[q + 1]]
        for i in range(n):
            d = jaccard_dist(rq, items[indptr[i]:indptr[i + 1]])
            _insert(ids, dists, flags, sizes, k, q, i, d)
    return ids, dists, sizes


# ---------------------------------------------------------------------------
# rear-list merge
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def merge_rear_rows(uids, udists, usizes, rids, rdists, rsizes, k):
    """Per-row sorted merge of main and rear lists, deduped, truncated to k."""
    n = uids.shape[0]
    out_ids = np.full((n, k), -1, dtype=np.int32)
    out_dists = np.full((n, k), np.inf, dtype=np.float64)
    out_sizes = np.zeros(n, dtype=np.int32)
    for u in prange(n):
        a = 0
        b = 0
        w = 0
        while w < k and (a < usizes[u] or b < rsizes[u]):
            if a < usizes[u] and (
                b >= rsizes[u]
                or udists[u, a] < rdists[u, b]
                or (udists[u, a] == rdists[u, b] and uids[u, a] <= rids[u, b])
            ):
                cid = uids[u, a]
                cd = udists[u, a]
                a += 1
            else:
                cid = rids[u, b]
                cd = rdists[u, b]
                b += 1
            dup = False
            for t in range(w):
                if out_ids[u, t] == cid:
                    dup = True
                    break
            if not dup:
                out_ids[u, w] = cid
                out_dists[u, w] = cd
                w += 1
        out_sizes[u] = w
    return out_ids, out_dists, out_sizes


# ---------------------------------------------------------------------------
# occlusion pruning
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def diversify_csr_dense(indptr, nids, ndists, data, tag):
    """Occlusion rule over CSR rows sorted by (dist, id); returns keep mask.

    A candidate is dropped when it is strictly closer to some already-kept
    neighbor than to the row's owner. Also returns the number of distance
    evaluations spent on occlusion checks.
    """
    n = indptr.shape[0] - 1
    keep = np.zeros(nids.shape[0], dtype=np.bool_)
    evals = 0
    for u in prange(n):
        lo = indptr[u]
        hi = indptr[u + 1]
        local = 0
        for c in range(lo, hi):
            ok = True
            for t in range(lo, c):
                if not keep[t]:
                    continue
                local += 1
                if dense_dist(data[nids[c]], data[nids[t]], tag) < ndists[c]:
                    ok = False
                    break
            keep[c] = ok
        evals += local
    return keep, evals


@njit(cache=True, parallel=True)
def diversify_csr_sparse(indptr, nids, ndists, d_indptr, d_items):
    n = indptr.shape[0] - 1
    keep = np.zeros(nids.shape[0], dtype=np.bool_)
    evals = 0
    for u in prange(n):
        lo = indptr[u]
        hi = indptr[u + 1]
        local = 0
        for c in range(lo, hi):
            ok = True
            ic = nids[c]
            rc = d_items[d_indptr[ic]:d_indptr[ic + 1]]
            for t in range(lo, c):
                if not keep[t]:
                    continue
                it = nids[t]
                local += 1
                d = jaccard_dist(rc, d_items[d_indptr[it]:d_indptr[it + 1]])
                if d < ndists[c]:
                    ok = False
                    break
            keep[c] = ok
        evals += local
    return keep, evals


@njit(cache=True, inline="always")
def _merge_kept_row(f_lo, f_hi, f_ids, f_dists, f_keep,
                    r_lo, r_hi, r_ids, r_dists, r_keep,
                    cap, out_ids, out_pos):
    """Two-pointer union of two kept, (dist, id)-sorted runs, id-deduped.

    Writes into out_ids starting at out_pos; returns the union size.
    cap < 0 means unbounded.
    """
    a = f_lo
    b = r_lo
    w = 0
    while True:
        while a < f_hi and not f_keep[a]:
            a += 1
        while b < r_hi and not r_keep[b]:
            b += 1
        if a >= f_hi and b >= r_hi:
            break
        if cap >= 0 and w >= cap:
            break
        take_f = False
        if a < f_hi and b < r_hi:
            if f_dists[a] < r_dists[b] or (
                f_dists[a] == r_dists[b] and f_ids[a] <= r_ids[b]
            ):
                take_f = True
        elif a < f_hi:
            take_f = True
        if take_f:
            cid = f_ids[a]
            a += 1
        else:
            cid = r_ids[b]
            b += 1
        dup = False
        for t in range(w):
            if out_ids[out_pos + t] == cid:
                dup = True
                break
        if not dup:
            out_ids[out_pos + w] = cid
            w += 1
    return w


@njit(cache=True, parallel=True)
def union_kept_csr(f_indptr, f_ids, f_dists, f_keep,
                   r_indptr, r_ids, r_dists, r_keep, cap):
    """Per-row union of kept forward and kept reverse neighbors.

    Rows come out ordered by (dist, id) with duplicate ids collapsed;
    cap >= 0 truncates each row to its nearest cap entries.
    """
    n = f_indptr.shape[0] - 1
    counts = np.zeros(n + 1, dtype=np.int64)
    for u in prange(n):
        width = (f_indptr[u + 1] - f_indptr[u]) + (r_indptr[u + 1] - r_indptr[u])
        buf = np.empty(max(width, 1), dtype=np.int32)
        counts[u + 1] = _merge_kept_row(
            f_indptr[u], f_indptr[u + 1], f_ids, f_dists, f_keep,
            r_indptr[u], r_indptr[u + 1], r_ids, r_dists, r_keep,
            cap, buf, 0,
        )
    indptr = np.cumsum(counts)
    out_ids = np.empty(indptr[n], dtype=np.int32)
    for u in prange(n):
        _merge_kept_row(
            f_indptr[u], f_indptr[u + 1], f_ids, f_dists, f_keep,
            r_indptr[u], r_indptr[u + 1], r_ids, r_dists, r_keep,
            cap, out_ids, indptr[u],
        )
    return indptr, out_ids


@njit(cache=True, parallel=True)
def cap_nearest_csr(indptr, nids, ndists, cap):
    """Per-row selection of the cap smallest (dist, id) entries, sorted."""
    n = indptr.shape[0] - 1
    counts = np.empty(n + 1, dtype=np.int64)
    counts[0] = 0
    for u in range(n):
        deg = indptr[u + 1] - indptr[u]
        counts[u + 1] = deg if deg < cap else cap
    out_indptr = np.cumsum(counts)
    out_ids = np.empty(out_indptr[n], dtype=np.int32)
    out_dists = np.empty(out_indptr[n], dtype=np.float64)
    for u in prange(n):
        lo = indptr[u]
        deg = indptr[u + 1] - lo
        m = out_indptr[u + 1] - out_indptr[u]
        base = out_indptr[u]
        w = 0
        for t in range(deg):
            cid = nids[lo + t]
            cd = ndists[lo + t]
            if w == m and (
                cd > out_dists[base + w - 1]
                or (cd == out_dists[base + w - 1] and cid >= out_ids[base + w - 1])
            ):
                continue
            pos = w
            for s in range(w):
                ds = out_dists[base + s]
                if cd < ds or (cd == ds and cid < out_ids[base + s]):
                    pos = s
                    break
            last = w - 1 if w == m else w
            if w < m:
                w += 1
            for s in range(last, pos, -1):
                out_ids[base + s] = out_ids[base + s - 1]
                out_dists[base + s] = out_dists[base + s - 1]
            out_ids[base + pos] = cid
            out_dists[base + pos] = cd
        for s in range(w, m):
            out_ids[base + s] = -1
            out_dists[base + s] = np.inf
    return out_indptr, out_ids, out_dists
