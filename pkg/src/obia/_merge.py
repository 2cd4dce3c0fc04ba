"""Numba kernel for local-mutual-best-fitting region merging.

Segments are identified by the flat index of their lowest pixel, so the
survivor of a merge is always the smaller id and ascending id order is
ascending lowest-pixel order. Adjacency lives in a growable pool of
(neighbor, shared edge count) entries; neighbor ids go stale after merges
and are resolved through union-find and deduplicated lazily.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _band_nsd(n, m2):
    # n * population std; m2 = sum of squared deviations
    if m2 <= 0.0:
        return 0.0
    return n * math.sqrt(m2 / n)


@njit(cache=True)
def merge_cost(a, b, shared, n, s, m2, perim, bbox, weights, shape_w, compact_w):
    """Baatz-Schaepe fusion cost of segments ``a`` and ``b`` (a < b)."""
    na = n[a]
    nb = n[b]
    nm = na + nb
    fa = float(na)
    fb = float(nb)
    fm = float(nm)
    color = 0.0
    if shape_w < 1.0:
        for k in range(weights.shape[0]):
            w = weights[k]
            if w == 0.0:
                continue
            d = s[a, k] * fb - s[b, k] * fa
            m2m = m2[a, k] + m2[b, k] + d * d / (fa * fb * fm)
            color += w * (_band_nsd(fm, m2m) - (_band_nsd(fa, m2[a, k]) + _band_nsd(fb, m2[b, k])))
    shape = 0.0
    if shape_w > 0.0:
        la = float(perim[a])
        lb = float(perim[b])
        lm = la + lb - 2.0 * shared
        r0 = min(bbox[a, 0], bbox[b, 0])
        r1 = max(bbox[a, 1], bbox[b, 1])
        c0 = min(bbox[a, 2], bbox[b, 2])
        c1 = max(bbox[a, 3], bbox[b, 3])
        bm = 2.0 * ((r1 - r0 + 1) + (c1 - c0 + 1))
        ba = 2.0 * ((bbox[a, 1] - bbox[a, 0] + 1) + (bbox[a, 3] - bbox[a, 2] + 1))
        bb = 2.0 * ((bbox[b, 1] - bbox[b, 0] + 1) + (bbox[b, 3] - bbox[b, 2] + 1))
        d_cmp = lm * math.sqrt(fm) - (la * math.sqrt(fa) + lb * math.sqrt(fb))
        d_smo = fm * lm / bm - (fa * la / ba + fb * lb / bb)
        shape = compact_w * d_cmp + (1.0 - compact_w) * d_smo
    return (1.0 - shape_w) * color + shape_w * shape


@njit(cache=True)
def _compact(x, parent, start, length, pool_id, pool_cnt, mark):
    # Resolve stale neighbor ids, sum duplicate counts, drop self-references.
    base = start[x]
    w = base
    for i in range(base, base + length[x]):
        y = _find(parent, pool_id[i])
        if y == x:
            continue
        j = mark[y]
        if j < 0:
            mark[y] = w
            pool_id[w] = y
            pool_cnt[w] = pool_cnt[i]
            w += 1
        else:
            pool_cnt[j] += pool_cnt[i]
    for i in range(base, w):
        mark[pool_id[i]] = -1
    length[x] = w - base


@njit(cache=True)
def _best(x, parent, start, length, pool_id, pool_cnt, mark,
          n, s, m2, perim, bbox, weights, shape_w, compact_w):
    _compact(x, parent, start, length, pool_id, pool_cnt, mark)
    best = -1
    best_f = np.inf
    best_shared = 0
    for i in range(start[x], start[x] + length[x]):
        y = pool_id[i]
        if x < y:
            f = merge_cost(x, y, pool_cnt[i], n, s, m2, perim, bbox, weights, shape_w, compact_w)
        else:
            f = merge_cost(y, x, pool_cnt[i], n, s, m2, perim, bbox, weights, shape_w, compact_w)
        if f < best_f or (f == best_f and y < best):
            best = y
            best_f = f
            best_shared = pool_cnt[i]
    return best, best_f, best_shared


@njit(cache=True)
def region_merge(values, height, width, weights, scale2, shape_w, compact_w):
    """Merge until no admissible mutual-best pair remains.

    ``values`` is pixel-major ``(P, B)`` float64. Returns the root id of every
    pixel plus per-root statistics and the merge log.
    """
    P = height * width
    B = values.shape[1]
    parent = np.arange(P)
    n = np.ones(P, dtype=np.int64)
    s = values.copy()
    sq = values * values
    m2 = np.zeros((P, B))
    perim = np.full(P, 4, dtype=np.int64)
    bbox = np.empty((P, 4), dtype=np.int64)

    cap = np.full(P, 4, dtype=np.int64)
    start = np.arange(P) * 4
    length = np.zeros(P, dtype=np.int64)
    pool_size = 8 * P + 16
    pool_id = np.empty(pool_size, dtype=np.int64)
    pool_cnt = np.empty(pool_size, dtype=np.int64)
    top = 4 * P
    mark = np.full(P, -1, dtype=np.int64)

    for p in range(P):
        r = p // width
        c = p - r * width
        bbox[p, 0] = r
        bbox[p, 1] = r
        bbox[p, 2] = c
        bbox[p, 3] = c
        k = start[p]
        if r > 0:
            pool_id[k] = p - width
            pool_cnt[k] = 1
            k += 1
        if c > 0:
            pool_id[k] = p - 1
            pool_cnt[k] = 1
            k += 1
        if c < width - 1:
            pool_id[k] = p + 1
            pool_cnt[k] = 1
            k += 1
        if r < height - 1:
            pool_id[k] = p + width
            pool_cnt[k] = 1
            k += 1
        length[p] = k - start[p]

    log_a = np.empty(max(P - 1, 1), dtype=np.int64)
    log_b = np.empty(max(P - 1, 1), dtype=np.int64)
    log_f = np.empty(max(P - 1, 1))
    n_log = 0

    changed = True
    while changed:
        changed = False
        for x in range(P):
            if parent[x] != x:
                continue
            y, f, shared = _best(x, parent, start, length, pool_id, pool_cnt, mark,
                                 n, s, m2, perim, bbox, weights, shape_w, compact_w)
            if y < 0 or not f < scale2:
                continue
            z, _, _ = _best(y, parent, start, length, pool_id, pool_cnt, mark,
                            n, s, m2, perim, bbox, weights, shape_w, compact_w)
            if z != x:
                continue
            a = min(x, y)
            b = max(x, y)
            fa = float(n[a])
            fb = float(n[b])
            for k in range(B):
                d = s[a, k] * fb - s[b, k] * fa
                m2[a, k] = m2[a, k] + m2[b, k] + d * d / (fa * fb * (fa + fb))
                s[a, k] += s[b, k]
                sq[a, k] += sq[b, k]
            n[a] += n[b]
            perim[a] = perim[a] + perim[b] - 2 * shared
            bbox[a, 0] = min(bbox[a, 0], bbox[b, 0])
            bbox[a, 1] = max(bbox[a, 1], bbox[b, 1])
            bbox[a, 2] = min(bbox[a, 2], bbox[b, 2])
            bbox[a, 3] = max(bbox[a, 3], bbox[b, 3])
            parent[b] = a

            # union of adjacency lists, stored in a's slot or a fresh one
            need = length[a] + length[b]
            if need > cap[a]:
                new_cap = 2 * need
                if top + new_cap > pool_id.shape[0]:
                    grow = max(2 * pool_id.shape[0], top + new_cap)
                    tmp_id = np.empty(grow, dtype=np.int64)
                    tmp_cnt = np.empty(grow, dtype=np.int64)
                    tmp_id[:top] = pool_id[:top]
                    tmp_cnt[:top] = pool_cnt[:top]
                    pool_id = tmp_id
                    pool_cnt = tmp_cnt
                for i in range(length[a]):
                    pool_id[top + i] = pool_id[start[a] + i]
                    pool_cnt[top + i] = pool_cnt[start[a] + i]
                start[a] = top
                cap[a] = new_cap
                top += new_cap
            base = start[a] + length[a]
            for i in range(length[b]):
                pool_id[base + i] = pool_id[start[b] + i]
                pool_cnt[base + i] = pool_cnt[start[b] + i]
            length[a] = need
            length[b] = 0
            _compact(a, parent, start, length, pool_id, pool_cnt, mark)

            log_a[n_log] = a
            log_b[n_log] = b
            log_f[n_log] = f
            n_log += 1
            changed = True

    roots = np.empty(P, dtype=np.int64)
    for p in range(P):
        roots[p] = _find(parent, p)
    return roots, n, s, sq, perim, bbox, log_a[:n_log], log_b[:n_log], log_f[:n_log]
