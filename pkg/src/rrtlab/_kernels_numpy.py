"""Pure-numpy twin of ``_kernels.planner_loop``.

Nearest/near scans are vectorized over the vertex array; the per-candidate
parent choice and rewiring run as Python loops. Distances accumulate one
coordinate at a time, matching the compiled kernel bit for bit.
"""

import math

import numpy as np

from ._kernels import radius_at


def _dist(a, b):
    acc = 0.0
    for x, y in zip(a, b):
        diff = x - y
        acc += diff * diff
    return math.sqrt(acc)


def _dists_to(V, x):
    acc = np.zeros(V.shape[0])
    for k in range(V.shape[1]):
        diff = V[:, k] - x[k]
        acc += diff * diff
    return np.sqrt(acc)


def _segment_free(a, b, lower, upper):
    if lower.shape[0] == 0:
        return True
    dk = b - a
    moving = dk != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lower - a) / dk
        t2 = (upper - a) / dk
    lo = np.where(moving, np.minimum(t1, t2), -np.inf)
    hi = np.where(moving, np.maximum(t1, t2), np.inf)
    static_in = np.all(np.where(moving, True, (lower < a) & (a < upper)), axis=1)
    t_lo = lo.max(axis=1)
    t_hi = hi.min(axis=1)
    hit = static_in & (t_lo < t_hi) & (t_lo < 1.0) & (t_hi > 0.0)
    return not bool(hit.any())


def planner_loop(samples, start, lower, upper, eta, star, kind, gamma, const):
    n, d = samples.shape
    cap = n + 1
    V = np.empty((cap, d))
    V[0] = start
    parent = np.full(cap, -1, np.int64)
    cost = np.zeros(cap)
    edge = np.zeros(cap)
    vertex_iter = np.zeros(cap, np.int64)
    children = [[] for _ in range(cap)]

    near_id = np.empty(n, np.int64)
    x_new = np.empty((n, d))
    accepted = np.zeros(n, np.bool_)
    chosen = np.full(n, -1, np.int64)
    radius_used = np.full(n, np.nan)
    rewires = []

    m = 1
    for j in range(n):
        xr = samples[j]
        dv = _dists_to(V[:m], xr)
        best = int(np.argmin(dv))
        bd = float(dv[best])
        near_id[j] = best
        if bd <= eta:
            xn = xr.copy()
        else:
            xn = V[best] + (xr - V[best]) * (eta / bd)
        x_new[j] = xn
        if not _segment_free(V[best], xn, lower, upper):
            continue
        accepted[j] = True

        near = ()
        if star:
            r = min(radius_at(kind, gamma, const, m, d), eta)
            radius_used[j] = r
            dn = _dists_to(V[:m], xn)
            near = np.flatnonzero(dn <= r).tolist()

        new = m
        V[new] = xn
        m += 1
        vertex_iter[new] = j + 1
        xn_t = xn.tolist()

        x_min = best
        c_min = float(cost[best]) + _dist(V[best].tolist(), xn_t)
        for v in near:
            c = float(cost[v]) + _dist(V[v].tolist(), xn_t)
            if c < c_min and _segment_free(V[v], xn, lower, upper):
                x_min = v
                c_min = c
        parent[new] = x_min
        cost[new] = c_min
        edge[new] = _dist(V[x_min].tolist(), xn_t)
        chosen[j] = x_min
        children[x_min].append(new)

        for v in near:
            dvn = _dist(xn_t, V[v].tolist())
            c = float(cost[new]) + dvn
            if c < cost[v] and _segment_free(xn, V[v], lower, upper):
                old = int(parent[v])
                children[old].remove(v)
                children[new].append(v)
                parent[v] = new
                edge[v] = dvn
                cost[v] = c
                stack = list(children[v])
                while stack:
                    u = stack.pop()
                    cost[u] = cost[parent[u]] + edge[u]
                    stack.extend(children[u])
                rewires.append((j + 1, v, old, new))

    rw = np.asarray(rewires, dtype=np.int64).reshape(-1, 4)
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
        rw,
    )
