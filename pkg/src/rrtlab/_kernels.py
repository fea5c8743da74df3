"""Scalar-loop RRT / RRT* kernel, compiled with numba when available.

Everything here is written in the numba-compatible subset of Python. The
numpy fallback in ``_kernels_numpy`` performs the same floating-point
operations in the same order, so both backends yield bit-identical output.
"""

import math

import numpy as np

KIND_ORIGINAL = 0
KIND_CORRECTED = 1
KIND_CONSTANT = 2

# Below this many vertices a plain scan beats the ring search on the grid.
LINEAR_SCAN_MAX = 512


def radius_at(kind, gamma, const, m, d):
    if kind == KIND_CONSTANT:
        return const
    if m <= 1:
        return 0.0
    base = math.log(m) / m
    if kind == KIND_ORIGINAL:
        expo = 1.0 / d
    else:
        expo = 1.0 / (d + 1)
    return gamma * base**expo


def dist_rows(a, b):
    acc = 0.0
    for k in range(a.shape[0]):
        diff = a[k] - b[k]
        acc += diff * diff
    return math.sqrt(acc)


def segment_free(a, b, lower, upper):
    d = a.shape[0]
    for i in range(lower.shape[0]):
        t_lo = -math.inf
        t_hi = math.inf
        hit = True
        for k in range(d):
            dk = b[k] - a[k]
            if dk == 0.0:
                if not (lower[i, k] < a[k] and a[k] < upper[i, k]):
                    hit = False
                    break
                continue
            t1 = (lower[i, k] - a[k]) / dk
            t2 = (upper[i, k] - a[k]) / dk
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > t_lo:
                t_lo = t1
            if t2 < t_hi:
                t_hi = t2
            if t_lo >= t_hi:
                hit = False
                break
        if hit and t_lo < t_hi and t_lo < 1.0 and t_hi > 0.0:
            return False
    return True


def grid_size(n, d):
    g = int(((n + 1) / 2.0) ** (1.0 / d))
    if g < 1:
        g = 1
    return g


def _axis_cell(x, g):
    i = int(x * g)
    if i < 0:
        return 0
    if i >= g:
        return g - 1
    return i


def _cell_index(x, g):
    c = 0
    mul = 1
    for k in range(x.shape[0]):
        c += _axis_cell(x[k], g) * mul
        mul *= g
    return c


def _grid_nearest(V, x, g, head, nxt, lo, hi, off):
    # Ring search on the cell grid; ties resolve to the smallest vertex id.
    d = x.shape[0]
    w = 1.0 / g
    best = -1
    bd = math.inf
    for k in range(d):
        off[k] = _axis_cell(x[k], g)
    for ring in range(g + 1):
        for k in range(d):
            lo[k] = off[k] - ring
            hi[k] = off[k] + ring
        idx = lo.copy()
        while True:
            on_ring = False
            inside = True
            c = 0
            mul = 1
            for k in range(d):
                if idx[k] < 0 or idx[k] >= g:
                    inside = False
                if idx[k] == lo[k] or idx[k] == hi[k]:
                    on_ring = True
                c += idx[k] * mul
                mul *= g
            if inside and on_ring:
                v = head[c]
                while v >= 0:
                    acc = 0.0
                    for k in range(d):
                        diff = V[v, k] - x[k]
                        acc += diff * diff
                    dv = math.sqrt(acc)
                    if dv < bd or (dv == bd and v < best):
                        bd = dv
                        best = v
                    v = nxt[v]
            k = 0
            while k < d:
                idx[k] += 1
                if idx[k] <= hi[k]:
                    break
                idx[k] = lo[k]
                k += 1
            if k == d:
                break
        if best >= 0 and bd < ring * w - 1e-12:
            break
    return best, bd


def _grid_near(V, x, r, g, head, nxt, lo, hi, out, out_d):
    # Unordered: callers must not depend on the order of ``out``.
    d = x.shape[0]
    for k in range(d):
        lo[k] = max(_axis_cell(x[k] - r, g) - 1, 0)
        hi[k] = min(_axis_cell(x[k] + r, g) + 1, g - 1)
    idx = lo.copy()
    nn = 0
    while True:
        c = 0
        mul = 1
        for k in range(d):
            c += idx[k] * mul
            mul *= g
        v = head[c]
        while v >= 0:
            acc = 0.0
            for k in range(d):
                diff = V[v, k] - x[k]
                acc += diff * diff
            dv = math.sqrt(acc)
            if dv <= r:
                out[nn] = v
                out_d[nn] = dv
                nn += 1
            v = nxt[v]
        k = 0
        while k < d:
            idx[k] += 1
            if idx[k] <= hi[k]:
                break
            idx[k] = lo[k]
            k += 1
        if k == d:
            break
    return nn


def grid_queries(V, Q, r):
    """Nearest id and closed ``r``-ball ids for each row of ``Q``, via the planner's grid.

    Returns ``(nearest, near_ids, near_ptr)``; the near set of query ``i`` is
    ``near_ids[near_ptr[i]:near_ptr[i+1]]`` in ascending id order.
    """
    m = V.shape[0]
    d = V.shape[1]
    g = grid_size(m, d)
    head = np.full(g**d, -1, np.int64)
    nxt = np.full(m, -1, np.int64)
    for v in range(m):
        c = _cell_index(V[v], g)
        nxt[v] = head[c]
        head[c] = v
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    off = np.empty(d, np.int64)
    buf = np.empty(m, np.int64)
    buf_d = np.empty(m)
    q = Q.shape[0]
    nearest = np.empty(q, np.int64)
    ptr = np.zeros(q + 1, np.int64)
    ids = np.empty(q * m, np.int64)
    for i in range(q):
        best, bd = _grid_nearest(V, Q[i], g, head, nxt, lo, hi, off)
        nearest[i] = best
        nn = _grid_near(V, Q[i], r, g, head, nxt, lo, hi, buf, buf_d)
        part = np.sort(buf[:nn])
        for k in range(nn):
            ids[ptr[i] + k] = part[k]
        ptr[i + 1] = ptr[i] + nn
    return nearest, ids[: ptr[q]].copy(), ptr


def _link(c, p, first_child, next_sib, prev_sib):
    head = first_child[p]
    next_sib[c] = head
    prev_sib[c] = -1
    if head >= 0:
        prev_sib[head] = c
    first_child[p] = c


def _unlink(c, p, first_child, next_sib, prev_sib):
    prv = prev_sib[c]
    nxt = next_sib[c]
    if prv >= 0:
        next_sib[prv] = nxt
    else:
        first_child[p] = nxt
    if nxt >= 0:
        prev_sib[nxt] = prv
    next_sib[c] = -1
    prev_sib[c] = -1


def _refresh_subtree(v, cost, edge, parent, first_child, next_sib, stack):
    # Descendants keep their parents; only the cached cost-to-come moves.
    top = 0
    c = first_child[v]
    while c >= 0:
        stack[top] = c
        top += 1
        c = next_sib[c]
    while top > 0:
        top -= 1
        u = stack[top]
        cost[u] = cost[parent[u]] + edge[u]
        c = first_child[u]
        while c >= 0:
            stack[top] = c
            top += 1
            c = next_sib[c]


def planner_loop(samples, start, lower, upper, eta, star, kind, gamma, const):
    """Run RRT (``star=False``) or RRT* iterations over ``samples``.

    Returns ``(V, parent, cost, vertex_iter, near_id, x_new, accepted,
    chosen_parent, radius_used, rewires)`` where ``rewires`` rows are
    ``(iteration, child, old_parent, new_parent)``.
    """
    n = samples.shape[0]
    d = samples.shape[1]
    cap = n + 1
    V = np.empty((cap, d))
    for k in range(d):
        V[0, k] = start[k]
    parent = np.full(cap, -1, np.int64)
    cost = np.zeros(cap)
    edge = np.zeros(cap)
    vertex_iter = np.zeros(cap, np.int64)
    first_child = np.full(cap, -1, np.int64)
    next_sib = np.full(cap, -1, np.int64)
    prev_sib = np.full(cap, -1, np.int64)
    stack = np.empty(cap, np.int64)
    near_buf = np.empty(cap, np.int64)
    near_d = np.empty(cap)
    cand = np.empty(cap, np.int64)
    cand_d = np.empty(cap)

    near_id = np.empty(n, np.int64)
    x_new = np.empty((n, d))
    accepted = np.zeros(n, np.bool_)
    chosen = np.full(n, -1, np.int64)
    radius_used = np.full(n, np.nan)
    rw = np.empty((64, 4), np.int64)
    nrw = 0

    g = grid_size(n, d)
    cell_head = np.full(g**d, -1, np.int64)
    cell_next = np.full(cap, -1, np.int64)
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    off = np.empty(d, np.int64)
    cell_head[_cell_index(V[0], g)] = 0

    m = 1
    xn = np.empty(d)
    for j in range(n):
        xr = samples[j]
        if m <= LINEAR_SCAN_MAX:
            best = -1
            bd = math.inf
            for v in range(m):
                dv = dist_rows(V[v], xr)
                if dv < bd:
                    bd = dv
                    best = v
        else:
            best, bd = _grid_nearest(V, xr, g, cell_head, cell_next, lo, hi, off)
        near_id[j] = best
        if bd <= eta:
            for k in range(d):
                xn[k] = xr[k]
        else:
            scale = eta / bd
            for k in range(d):
                xn[k] = V[best, k] + (xr[k] - V[best, k]) * scale
        for k in range(d):
            x_new[j, k] = xn[k]
        if not segment_free(V[best], xn, lower, upper):
            continue
        accepted[j] = True

        nn = 0
        if star:
            r = min(radius_at(kind, gamma, const, m, d), eta)
            radius_used[j] = r
            nn = _grid_near(V, xn, r, g, cell_head, cell_next, lo, hi, near_buf, near_d)

        new = m
        for k in range(d):
            V[new, k] = xn[k]
        m += 1
        vertex_iter[new] = j + 1
        c = _cell_index(xn, g)
        cell_next[new] = cell_head[c]
        cell_head[c] = new

        # Start from the nearest vertex, switch only on strict improvement;
        # equal improvements resolve to the smallest id.
        x_min = best
        c0 = cost[best] + dist_rows(V[best], xn)
        c_min = c0
        for q in range(nn):
            v = near_buf[q]
            c = cost[v] + near_d[q]
            if c < c0 and (c < c_min or (c == c_min and v < x_min)):
                if segment_free(V[v], xn, lower, upper):
                    x_min = v
                    c_min = c
        parent[new] = x_min
        cost[new] = c_min
        edge[new] = dist_rows(V[x_min], xn)
        chosen[j] = x_min
        _link(new, x_min, first_child, next_sib, prev_sib)

        # Costs only fall while rewiring, so a neighbour that fails the test
        # now can never pass it later in this loop.
        nc = 0
        for q in range(nn):
            v = near_buf[q]
            if cost[new] + near_d[q] < cost[v]:
                cand[nc] = v
                cand_d[v] = near_d[q]
                nc += 1
        if nc > 1:
            cand[:nc].sort()
        for q in range(nc):
            v = cand[q]
            dvn = cand_d[v]
            c = cost[new] + dvn
            if c < cost[v] and segment_free(xn, V[v], lower, upper):
                old = parent[v]
                _unlink(v, old, first_child, next_sib, prev_sib)
                _link(v, new, first_child, next_sib, prev_sib)
                parent[v] = new
                edge[v] = dvn
                cost[v] = c
                _refresh_subtree(v, cost, edge, parent, first_child, next_sib, stack)
                if nrw == rw.shape[0]:
                    grown = np.empty((2 * rw.shape[0], 4), np.int64)
                    grown[:nrw] = rw[:nrw]
                    rw = grown
                rw[nrw, 0] = j + 1
                rw[nrw, 1] = v
                rw[nrw, 2] = old
                rw[nrw, 3] = new
                nrw += 1

    return (
        V[:m].copy(),
        parent[:m].copy(),
        cost[:m].copy(),
        vertex_iter[:m].copy(),
        near_id,
        x_new,
        accepted,
        chosen,
        radius_used,
        rw[:nrw].copy(),
    )
