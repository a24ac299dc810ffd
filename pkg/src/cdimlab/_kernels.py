"""Compiled graph searches shared by the cover and modulus code.

All graphs are symmetric CSR triples ``(indptr, indices, data)``.  Heaps pop
``(distance, node)`` tuples, so ties resolve toward the smaller node index.
"""

import heapq

import numba
import numpy as np

INF = np.inf


@numba.njit(cache=True)
def farthest_point_net(indptr, indices, data, seed, r):
    """Greedy farthest-point net: start at ``seed``, repeatedly add the node
    farthest from the current centers, stop once that distance drops below
    ``r``.  Returns the centers in selection order and the final distances."""
    n = indptr.shape[0] - 1
    dmin = np.full(n, INF)
    centers = [seed]
    far = [(0.0, seed)]
    far.pop()
    c = seed
    first = True
    while True:
        dmin[c] = 0.0
        pq = [(0.0, c)]
        while len(pq) > 0:
            d, u = heapq.heappop(pq)
            if d > dmin[u]:
                continue
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                nd = d + data[k]
                if nd < dmin[v]:
                    dmin[v] = nd
                    heapq.heappush(pq, (nd, v))
                    if not first:
                        heapq.heappush(far, (-nd, v))
        if first:
            for v in range(n):
                far.append((-dmin[v], v))
            heapq.heapify(far)
            first = False
        while True:
            nd, v = far[0]
            if -nd != dmin[v]:
                heapq.heappop(far)
                continue
            break
        if -nd < r or len(far) == 0:
            break
        c = v
        centers.append(c)
    return np.array(centers), dmin


@numba.njit(cache=True)
def bounded_searches(indptr, indices, data, sources, limit, record):
    """For each source, every node with distance ``< limit`` for which
    ``record[node]`` holds.  Returns CSR ``(ptr, nodes, dists)`` over sources."""
    n = indptr.shape[0] - 1
    dist = np.full(n, INF)
    touched = np.empty(n, dtype=np.int64)
    out_nodes = []
    out_dist = []
    ptr = np.zeros(sources.shape[0] + 1, dtype=np.int64)
    for si in range(sources.shape[0]):
        s = sources[si]
        nt = 0
        dist[s] = 0.0
        touched[nt] = s
        nt += 1
        pq = [(0.0, s)]
        while len(pq) > 0:
            d, u = heapq.heappop(pq)
            if d > dist[u]:
                continue
            if record[u]:
                out_nodes.append(u)
                out_dist.append(d)
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                nd = d + data[k]
                if nd < limit and nd < dist[v]:
                    if dist[v] == INF:
                        touched[nt] = v
                        nt += 1
                    dist[v] = nd
                    heapq.heappush(pq, (nd, v))
        for i in range(nt):
            dist[touched[i]] = INF
        ptr[si + 1] = len(out_nodes)
    return ptr, np.array(out_nodes, dtype=np.int64), np.array(out_dist)


@numba.njit(cache=True)
def _arc(s, t, diam):
    d = abs(s - t) % (2.0 * diam)
    return min(d, 2.0 * diam - d)


@numba.njit(cache=True)
def tree_distance(x, y, owner, coord, parent, depth, diam, pcoord):
    """Exact length-metric distance between nodes ``x`` and ``y``.

    A subtree of circles meets the rest of the space only in its glue pair,
    so the distance is found by lifting both points to their common circle
    while tracking the distance to the two exits of the current circle.
    ``pcoord[c, k]`` is the coordinate on ``parent[c]`` of the glue point of
    ``c`` at child coordinate ``k * diam[c]``.
    """
    cx = owner[x]
    cy = owner[y]
    xp0 = coord[x]
    xp1 = coord[x]
    xd0 = 0.0
    xd1 = INF
    yp0 = coord[y]
    yp1 = coord[y]
    yd0 = 0.0
    yd1 = INF
    while cx != cy:
        if depth[cx] >= depth[cy]:
            D = diam[cx]
            e0 = min(xd0 + _arc(xp0, 0.0, D), xd1 + _arc(xp1, 0.0, D))
            e1 = min(xd0 + _arc(xp0, D, D), xd1 + _arc(xp1, D, D))
            xp0 = pcoord[cx, 0]
            xp1 = pcoord[cx, 1]
            xd0 = e0
            xd1 = e1
            cx = parent[cx]
        else:
            D = diam[cy]
            e0 = min(yd0 + _arc(yp0, 0.0, D), yd1 + _arc(yp1, 0.0, D))
            e1 = min(yd0 + _arc(yp0, D, D), yd1 + _arc(yp1, D, D))
            yp0 = pcoord[cy, 0]
            yp1 = pcoord[cy, 1]
            yd0 = e0
            yd1 = e1
            cy = parent[cy]
    D = diam[cx]
    best = xd0 + _arc(xp0, yp0, D) + yd0
    best = min(best, xd0 + _arc(xp0, yp1, D) + yd1)
    best = min(best, xd1 + _arc(xp1, yp0, D) + yd0)
    best = min(best, xd1 + _arc(xp1, yp1, D) + yd1)
    return best


@numba.njit(cache=True)
def nearest_far(indptr, indices, weight, sources, points, delta, limit, k, step, stop_below,
                owner, coord, parent, depth, diam, pcoord):
    """Node-weighted searches over a nerve: for each source set, the cheapest
    path to a set whose center lies at metric distance ``>= delta``.

    ``points[i]`` is the space node at the center of set ``i``.  Path cost
    counts the weight of every set on it, endpoints included.  Only the ``k``
    cheapest sources are needed, so each search is cut off at the current
    ``k``-th best cost (and at ``limit``).  Sources that were cut off report
    ``inf`` with target ``-2``; sources whose search exhausted the nerve
    without a cut report ``inf`` with target ``-1``.

    ``step`` bounds the metric distance between centers of adjacent sets;
    when positive the searches are A* with the consistent estimate
    ``w_min * ceil((delta - d(s, u)) / step)`` of the remaining cost, so the
    reported costs stay exact.

    Once ``k`` sources have costs below ``stop_below`` the remaining sources
    are skipped and report ``inf`` with target ``-3``; pass ``-inf`` to scan
    every source.
    """
    n = indptr.shape[0] - 1
    wmin = weight.min() if step > 0 else 0.0
    dist = np.full(n, INF)
    touched = np.empty(n, dtype=np.int64)
    best = np.full(sources.shape[0], INF)
    target = np.full(sources.shape[0], -1, dtype=np.int64)
    top = np.full(k, INF)  # sorted k smallest costs found so far
    for si in range(sources.shape[0]):
        if top[k - 1] < stop_below:
            target[si:] = -3
            break
        s = sources[si]
        bound = min(limit, top[k - 1])
        nt = 0
        cut = False
        d0 = weight[s]
        if d0 >= bound:
            target[si] = -2
            continue
        dist[s] = d0
        touched[nt] = s
        nt += 1
        pq = [(d0, d0, s)]
        while len(pq) > 0:
            f, d, u = heapq.heappop(pq)
            if d > dist[u]:
                continue
            gap = delta - tree_distance(points[s], points[u], owner, coord, parent, depth,
                                        diam, pcoord)
            if gap <= 0:
                best[si] = d
                target[si] = u
                break
            for kk in range(indptr[u], indptr[u + 1]):
                v = indices[kk]
                nd = d + weight[v]
                if nd >= bound:
                    cut = True
                    continue
                if nd >= dist[v]:
                    continue
                h = 0.0
                if wmin > 0:
                    gv = delta - tree_distance(points[s], points[v], owner, coord, parent,
                                               depth, diam, pcoord)
                    if gv > 0:
                        h = wmin * np.ceil(gv / step)
                if nd + h >= bound:
                    cut = True
                    continue
                if dist[v] == INF:
                    touched[nt] = v
                    nt += 1
                dist[v] = nd
                heapq.heappush(pq, (nd + h, nd, v))
        for i in range(nt):
            dist[touched[i]] = INF
        if target[si] >= 0:
            d = best[si]
            j = k - 1
            if d < top[j]:
                while j > 0 and top[j - 1] > d:
                    top[j] = top[j - 1]
                    j -= 1
                top[j] = d
        elif cut:
            target[si] = -2
    return best, target


@numba.njit(cache=True)
def node_weighted_tree(indptr, indices, weight, sources, limit=INF):
    """Multi-source node-weighted shortest paths with predecessors.

    Only strict improvements relax a node; since the heap pops equal costs
    in index order, the smallest-index predecessor is the one recorded.
    Costs above ``limit`` are not explored.
    """
    n = indptr.shape[0] - 1
    dist = np.full(n, INF)
    pred = np.full(n, -1, dtype=np.int64)
    pq = [(0.0, np.int64(0))]
    pq.pop()
    for s in sources:
        if weight[s] < dist[s]:
            dist[s] = weight[s]
            heapq.heappush(pq, (weight[s], s))
    while len(pq) > 0:
        d, u = heapq.heappop(pq)
        if d > dist[u]:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            nd = d + weight[v]
            if nd < dist[v] and nd <= limit:
                heapq.heappush(pq, (nd, v))
                dist[v] = nd
                pred[v] = u
    return dist, pred


def trace(pred, t):
    path = [int(t)]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def csr_arrays(g, data=None):
    """``(indptr, indices, data)`` of a scipy CSR matrix with int64 indices."""
    return (g.indptr.astype(np.int64), g.indices.astype(np.int64),
            np.asarray(g.data if data is None else data, dtype=np.float64))


@numba.njit(cache=True)
def distances_to(x, nodes, owner, coord, parent, depth, diam, pcoord):
    """Closed-form distances from node ``x`` to each of ``nodes``."""
    out = np.empty(nodes.shape[0])
    for i in range(nodes.shape[0]):
        out[i] = tree_distance(x, nodes[i], owner, coord, parent, depth, diam, pcoord)
    return out


@numba.njit(cache=True)
def min_pair_ratio(pairs, scale, owner, coord, parent, depth, diam, pcoord):
    """``min_{i<j} d(P_i, P_j) / min(scale_i, scale_j)`` over point pairs
    ``pairs[i] = (x_i, y_i)``; returns the value and the minimizing ``(i, j)``."""
    best = INF
    bi = -1
    bj = -1
    m = pairs.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            d = INF
            for a in range(2):
                for b in range(2):
                    t = tree_distance(pairs[i, a], pairs[j, b], owner, coord, parent,
                                      depth, diam, pcoord)
                    if t < d:
                        d = t
            r = d / min(scale[i], scale[j])
            if r < best:
                best = r
                bi = i
                bj = j
    return best, bi, bj
