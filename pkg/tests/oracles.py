"""Slow, independent reference implementations used as test oracles."""
import itertools
import math

import mpmath
import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree


def eq1(fa, ca, fb, cb, w):
    total = 0.0
    for i in range(5):
        t = w[i] * (fa[i] - fb[i])
        total += t * t
    dx = ca[0] - cb[0]
    dy = ca[1] - cb[1]
    return total + (dx * dx + dy * dy)


def naive_slc(feats, centers, w):
    """Textbook agglomerative single linkage; O(n^3).

    Ties go to the pair with the smallest (min label, max label), a label
    being the smallest member id of a cluster.
    """
    w = getattr(w, "w", w)
    n = len(feats)
    D = [[eq1(feats[i], centers[i], feats[j], centers[j], w) for j in range(n)] for i in range(n)]
    clusters = [frozenset([i]) for i in range(n)]
    merges = []
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            A, B = clusters[a], clusters[b]
            d = min(D[i][j] for i in A for j in B)
            key = (d,) + tuple(sorted((min(A), min(B))))
            if best is None or key < best[0]:
                best = (key, a, b)
        _, a, b = best
        A, B = clusters[a], clusters[b]
        merges.append((A, B, best[0][0]))
        clusters = [c for k, c in enumerate(clusters) if k not in (a, b)] + [A | B]
    return merges


def kruskal_total(points):
    """MST weight of the complete Euclidean graph, by plain Kruskal."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            d = pts[i] - pts[j]
            edges.append((math.sqrt(d[0] * d[0] + d[1] * d[1]), i, j))
    edges.sort()
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    chosen = []
    for d, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            chosen.append(d)
    return math.fsum(chosen)


def binomial_tail_mp(k, n, p, dps=50):
    with mpmath.workdps(dps):
        p = mpmath.mpf(p)
        return sum(mpmath.binomial(n, i) * p ** i * (1 - p) ** (n - i) for i in range(k, n + 1))


def circular_stats_mp(angles, dps=50):
    """Axial mean and circular std at high precision.

    The std is ill-conditioned as the resultant length approaches 1, so the
    float formula loses about half its digits there.
    """
    with mpmath.workdps(dps):
        n = len(angles)
        c = mpmath.fsum(mpmath.cos(2 * mpmath.mpf(a)) for a in angles) / n
        s = mpmath.fsum(mpmath.sin(2 * mpmath.mpf(a)) for a in angles) / n
        r = mpmath.sqrt(c * c + s * s)
        mean = float(mpmath.atan2(s, c) / 2)
        if r == 0:
            return mean, math.pi / 2
        return mean, float(mpmath.sqrt(-2 * mpmath.log(min(r, mpmath.mpf(1)))) / 2)


def group_features_scratch(ids, scalars, centers, hu):
    """The 14 group features straight from their definitions.

    Uses scipy for the spanning tree and plain numpy for all moments; ties
    between equal edge lengths are assumed absent.
    """
    ids = np.asarray(sorted(ids))
    S = scalars[ids]
    mean, std = S.mean(0), S.std(0)

    def cv(k):
        return std[k] / abs(mean[k]) if mean[k] != 0 else 0.0

    H = hu[ids]
    pair = [np.linalg.norm(H[a] - H[b]) for a, b in itertools.combinations(range(len(ids)), 2)]
    P = centers[ids]
    dm = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
    # scipy treats 0 as "no edge"; nudge exact zeros
    mst = minimum_spanning_tree(np.where(dm == 0, 1e-300, dm)).tocoo()
    lengths = np.array([dm[i, j] for i, j in zip(mst.row, mst.col)])
    angles = np.array([math.atan2(P[j, 1] - P[i, 1], P[j, 0] - P[i, 0]) % math.pi
                       for i, j in zip(mst.row, mst.col)])
    ang_mean, ang_std = circular_stats_mp(angles)
    widths = np.array([(S[i, 3] + S[j, 3]) / 2 for i, j in zip(mst.row, mst.col)])
    wcv = widths.std() / abs(widths.mean()) if widths.mean() != 0 else 0.0
    ratio = lengths.mean() / mean[2] if mean[2] != 0 else 0.0
    return np.array([std[0], std[1], cv(2), cv(3), std[4], cv(5), np.mean(pair),
                     mean[6], std[6], cv(7), ang_mean, ang_std, wcv, ratio])
