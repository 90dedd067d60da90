"""Numba kernels: min-tree construction and MSER selection.

The tree is built with the union-find algorithm of Berger et al. over pixels
sorted by increasing intensity, so extremal regions are dark blobs. Bright
blobs are obtained by running the same kernels on the inverted channel.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _counting_sort(values):
    n = values.size
    counts = np.zeros(257, np.int64)
    for i in range(n):
        counts[values[i] + 1] += 1
    for v in range(1, 257):
        counts[v] += counts[v - 1]
    order = np.empty(n, np.int64)
    for i in range(n):
        v = values[i]
        order[counts[v]] = i
        counts[v] += 1
    return order


@njit(cache=True)
def _find(zpar, x):
    root = x
    while zpar[root] != root:
        root = zpar[root]
    while zpar[x] != root:
        nxt = zpar[x]
        zpar[x] = root
        x = nxt
    return root


@njit(cache=True)
def min_tree(values, height, width):
    """Return (order, parent, area, start) for the 8-connected min-tree.

    ``parent`` is canonical: a pixel is a node representative iff it is the
    root or its parent has a different value. ``start`` places every subtree
    in a contiguous range of the pre-order array built by ``flatten``.
    """
    n = height * width
    order = _counting_sort(values)
    parent = np.empty(n, np.int64)
    # union by rank; top[r] is the newest pixel of the set rooted at r
    zpar = np.full(n, -1, np.int32)
    rank = np.zeros(n, np.int32)
    top = np.empty(n, np.int32)
    for t in range(n):
        p = order[t]
        parent[p] = p
        zpar[p] = p
        top[p] = p
        rp = p
        py = p // width
        px = p - py * width
        for dy in range(-1, 2):
            yy = py + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(-1, 2):
                if dx == 0 and dy == 0:
                    continue
                xx = px + dx
                if xx < 0 or xx >= width:
                    continue
                q = yy * width + xx
                if zpar[q] == -1:
                    continue
                rq = _find(zpar, q)
                if rq != rp:
                    parent[top[rq]] = p
                    if rank[rp] < rank[rq]:
                        zpar[rp] = rq
                        rp = rq
                    else:
                        zpar[rq] = rp
                        if rank[rp] == rank[rq]:
                            rank[rp] += 1
                    top[rp] = p
    for t in range(n - 1, -1, -1):
        p = order[t]
        q = parent[p]
        if values[parent[q]] == values[q]:
            parent[p] = parent[q]

    area = np.ones(n, np.int64)
    for t in range(n):
        p = order[t]
        if parent[p] != p:
            area[parent[p]] += area[p]

    start = np.zeros(n, np.int64)
    nextfree = np.zeros(n, np.int64)
    for t in range(n - 1, -1, -1):
        p = order[t]
        par = parent[p]
        if par == p:
            start[p] = 0
        else:
            start[p] = nextfree[par]
            nextfree[par] += area[p]
        nextfree[p] = start[p] + 1
    return order, parent, area, start


@njit(cache=True)
def flatten(start):
    flat = np.empty(start.size, np.int64)
    for p in range(start.size):
        flat[start[p]] = p
    return flat


@njit(cache=True)
def select_mser(values, parent, area, delta, min_area, max_area,
                max_variation, min_diversity):
    """Indices of canonical nodes that are maximally stable extremal regions."""
    n = values.size
    canonical = np.zeros(n, np.bool_)
    for p in range(n):
        if parent[p] == p or values[parent[p]] != values[p]:
            canonical[p] = True

    variation = np.full(n, np.inf)
    for p in range(n):
        if not canonical[p]:
            continue
        limit = values[p] + delta
        a = p
        while parent[a] != a and values[parent[a]] <= limit:
            a = parent[a]
        variation[p] = (area[a] - area[p]) / area[p]

    stable = canonical.copy()
    for p in range(n):
        if not canonical[p] or parent[p] == p:
            continue
        q = parent[p]
        if values[q] != values[p] + 1:
            continue
        if variation[p] < variation[q]:
            stable[q] = False
        else:
            stable[p] = False

    candidate = np.zeros(n, np.bool_)
    for p in range(n):
        if (stable[p] and area[p] >= min_area and area[p] <= max_area
                and variation[p] <= max_variation):
            candidate[p] = True

    keep = candidate.copy()
    for p in range(n):
        if not candidate[p]:
            continue
        a = p
        while parent[a] != a:
            a = parent[a]
            if candidate[a]:
                break
        if a != p and candidate[a]:
            if (area[a] - area[p]) / area[a] < min_diversity:
                keep[p] = False

    count = 0
    for p in range(n):
        if keep[p]:
            count += 1
    out = np.empty(count, np.int64)
    j = 0
    for p in range(n):
        if keep[p]:
            out[j] = p
            j += 1
    return out
