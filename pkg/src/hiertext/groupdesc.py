"""Incrementally computable group descriptors.

Every dendrogram node carries an :class:`IncrementalStats`. Scalar statistics
are merged in constant time with Chan's parallel update of (count, mean, M2).
The minimum spanning tree of a parent is rebuilt from the two child trees
plus all cross edges: an edge missing from a child's tree is the longest edge
of a cycle inside that child and therefore cannot enter the parent's tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .simspace import FEATURE_NAMES

MAX_CLUSTER_SIZE = 50

# order of the scalar accumulators
SCALAR_NAMES = (
    "intensity_mean",
    "boundary_intensity_mean",
    "major_axis",
    "stroke_width_mean",
    "border_gradient_mean",
    "aspect_ratio",
    "hull_compactness",
    "convexity_defect_count",
)
_STROKE = SCALAR_NAMES.index("stroke_width_mean")
_MAJOR = SCALAR_NAMES.index("major_axis")

GROUP_FEATURE_NAMES = (
    "fg_intensity_std",
    "bg_intensity_std",
    "major_axis_cv",
    "stroke_width_cv",
    "gradient_std",
    "aspect_ratio_cv",
    "hu_mean_distance",
    "hull_compactness_mean",
    "hull_compactness_std",
    "convexity_defects_cv",
    "mst_angle_mean",
    "mst_angle_std",
    "mst_edge_width_cv",
    "mst_distance_to_diameter",
)


class UndefinedGroupError(ValueError):
    pass


@dataclass(frozen=True)
class RegionTable:
    """Column view of a region list, indexed by region id."""

    scalars: np.ndarray   # (n, 8) in SCALAR_NAMES order
    feats: np.ndarray     # (n, 5) similarity features
    centers: np.ndarray   # (n, 2)
    hu: np.ndarray        # (n, 7)

    @classmethod
    def from_regions(cls, regions: Sequence) -> "RegionTable":
        n = len(regions)
        scalars = np.array([[float(getattr(r, k)) for k in SCALAR_NAMES] for r in regions],
                           dtype=np.float64).reshape(n, 8)
        feats = np.array([[float(getattr(r, k)) for k in FEATURE_NAMES] for r in regions],
                         dtype=np.float64).reshape(n, 5)
        centers = np.array([r.centroid for r in regions], dtype=np.float64).reshape(n, 2)
        hu = np.array([r.hu_moments for r in regions], dtype=np.float64).reshape(n, 7)
        return cls(scalars, feats, centers, hu)

    def __len__(self) -> int:
        return len(self.scalars)


@dataclass(frozen=True)
class MSTState:
    """Spanning tree over member centroids; edges are (id_a < id_b, length)."""

    edges: tuple = ()
    total_length: float = 0.0

    def lengths(self) -> np.ndarray:
        return np.array([e[2] for e in self.edges], dtype=np.float64)

    def angles(self, centers: np.ndarray) -> np.ndarray:
        """Edge orientations in [0, pi)."""
        if not self.edges:
            return np.zeros(0)
        ij = np.array([(e[0], e[1]) for e in self.edges], dtype=np.int64)
        d = centers[ij[:, 1]] - centers[ij[:, 0]]
        return np.mod(np.arctan2(d[:, 1], d[:, 0]), np.pi)


@dataclass(frozen=True)
class IncrementalStats:
    count: int
    members: tuple = ()
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    fmin: Optional[np.ndarray] = None
    fmax: Optional[np.ndarray] = None
    hu_sum: float = 0.0
    mst: MSTState = MSTState()
    oversize: bool = False

    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.m2 / self.count, 0.0))

    def cv(self) -> np.ndarray:
        std = self.std()
        out = np.zeros_like(std)
        nz = self.mean != 0
        out[nz] = std[nz] / np.abs(self.mean[nz])
        return out


def _oversize(count: int) -> IncrementalStats:
    return IncrementalStats(count=count, oversize=True)


def stats_from_region(region, region_id: int = 0) -> IncrementalStats:
    scal = np.array([float(getattr(region, k)) for k in SCALAR_NAMES])
    feats = np.array([float(getattr(region, k)) for k in FEATURE_NAMES])
    return IncrementalStats(count=1, members=(int(region_id),), mean=scal,
                            m2=np.zeros(8), fmin=feats, fmax=feats.copy())


def stats_from_table(table: RegionTable, region_id: int) -> IncrementalStats:
    return IncrementalStats(count=1, members=(int(region_id),),
                            mean=table.scalars[region_id].copy(), m2=np.zeros(8),
                            fmin=table.feats[region_id].copy(),
                            fmax=table.feats[region_id].copy())


@njit(cache=True)
def _kruskal_select(n_nodes, ei, ej, order):
    parent = np.arange(n_nodes)
    chosen = np.zeros(ei.size, np.bool_)
    taken = 0
    for k in order:
        a = ei[k]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = ej[k]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            parent[a] = b
            chosen[k] = True
            taken += 1
            if taken == n_nodes - 1:
                break
    return chosen


def edge_lengths(centers: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    d = centers[i] - centers[j]
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])


def _spanning_tree(members: np.ndarray, gi: np.ndarray, gj: np.ndarray,
                   lengths: np.ndarray) -> MSTState:
    """Kruskal over candidate edges given by global ids (gi < gj)."""
    local = {int(m): k for k, m in enumerate(members)}
    li = np.fromiter((local[int(x)] for x in gi), np.int64, gi.size)
    lj = np.fromiter((local[int(x)] for x in gj), np.int64, gj.size)
    order = np.lexsort((gj, gi, lengths))
    chosen = _kruskal_select(len(members), li, lj, order)
    sel = order[chosen[order]]
    sel = sel[np.lexsort((gj[sel], gi[sel]))]
    edges = tuple((int(gi[k]), int(gj[k]), float(lengths[k])) for k in sel)
    return MSTState(edges, math.fsum(e[2] for e in edges))


def merge_stats(a: IncrementalStats, b: IncrementalStats, table: RegionTable,
                max_cluster_size: int = MAX_CLUSTER_SIZE) -> IncrementalStats:
    """Statistics of the union of two disjoint member sets."""
    n = a.count + b.count
    if a.oversize or b.oversize or n > max_cluster_size:
        return _oversize(n)
    na, nb = a.count, b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (nb / n)
    m2 = a.m2 + b.m2 + delta * delta * (na * nb / n)

    ia = np.array(a.members, dtype=np.int64)
    ib = np.array(b.members, dtype=np.int64)
    hu_cross = np.sqrt(((table.hu[ia][:, None, :] - table.hu[ib][None, :, :]) ** 2).sum(-1))
    hu_sum = a.hu_sum + b.hu_sum + float(hu_cross.sum())

    ca, cb = np.meshgrid(ia, ib, indexing="ij")
    ca, cb = ca.ravel(), cb.ravel()
    cross_i, cross_j = np.minimum(ca, cb), np.maximum(ca, cb)
    old = a.mst.edges + b.mst.edges
    gi = np.concatenate([np.array([e[0] for e in old], np.int64), cross_i])
    gj = np.concatenate([np.array([e[1] for e in old], np.int64), cross_j])
    lengths = np.concatenate([np.array([e[2] for e in old], np.float64),
                              edge_lengths(table.centers, cross_i, cross_j)])
    members = np.concatenate([ia, ib])
    mst = _spanning_tree(members, gi, gj, lengths)

    return IncrementalStats(
        count=n, members=tuple(a.members) + tuple(b.members),
        mean=mean, m2=m2,
        fmin=np.minimum(a.fmin, b.fmin), fmax=np.maximum(a.fmax, b.fmax),
        hu_sum=hu_sum, mst=mst,
    )


def circular_stats(angles: np.ndarray) -> tuple[float, float]:
    """Mean in (-pi/2, pi/2] and circular std of axial angles (period pi)."""
    if angles.size == 0:
        return 0.0, 0.0
    z = np.exp(2j * angles).mean()
    mean = float(np.angle(z) / 2.0)
    # 1 - r^2 as a pairwise sum avoids cancellation when r is close to 1
    diff = angles[:, None] - angles[None, :]
    q = min(2.0 * float(np.sum(np.sin(diff) ** 2)) / angles.size ** 2, 1.0)
    if q >= 1.0:
        return mean, float(np.pi / 2)
    return mean, float(np.sqrt(-np.log1p(-q)) / 2.0)


def _cv(std: float, mean: float) -> float:
    return std / abs(mean) if mean != 0 else 0.0


def _assemble(count, mean, std, cv, hu_mean, angles, mst_lengths, edge_widths):
    ang_mean, ang_std = circular_stats(angles)
    if edge_widths.size:
        width_cv = _cv(float(edge_widths.std()), float(edge_widths.mean()))
    else:
        width_cv = 0.0
    major_mean = mean[_MAJOR]
    ratio = float(mst_lengths.mean()) / major_mean if major_mean != 0 else 0.0
    return np.array([
        std[0], std[1], cv[2], cv[3], std[4], cv[5], hu_mean,
        mean[6], std[6], cv[7], ang_mean, ang_std, width_cv, ratio,
    ], dtype=np.float64)


def group_features(stats: IncrementalStats, table: RegionTable) -> np.ndarray:
    """14-dim group feature vector from incremental statistics."""
    if stats.oversize:
        raise UndefinedGroupError("oversize groups have no feature vector")
    n = stats.count
    if n < 2:
        raise UndefinedGroupError("a group needs at least two members")
    pairs = n * (n - 1) / 2
    lengths = stats.mst.lengths()
    ij = np.array([(e[0], e[1]) for e in stats.mst.edges], dtype=np.int64)
    widths = 0.5 * (table.scalars[ij[:, 0], _STROKE] + table.scalars[ij[:, 1], _STROKE])
    return _assemble(n, stats.mean, stats.std(), stats.cv(), stats.hu_sum / pairs,
                     stats.mst.angles(table.centers), lengths, widths)


def prim_mst(members: Sequence[int], centers: np.ndarray) -> MSTState:
    """Minimum spanning tree of the complete Euclidean graph, O(n^2) Prim."""
    ids = np.asarray(members, dtype=np.int64)
    n = ids.size
    if n < 2:
        return MSTState()
    pts = centers[ids]
    in_tree = np.zeros(n, bool)
    best = np.full(n, np.inf)
    link = np.zeros(n, np.int64)
    in_tree[0] = True
    d = pts - pts[0]
    best[:] = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        k = int(np.argmin(cand))
        a, b = sorted((int(ids[link[k]]), int(ids[k])))
        edges.append((a, b, float(cand[k])))
        in_tree[k] = True
        d = pts - pts[k]
        dk = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
        closer = dk < best
        best[closer] = dk[closer]
        link[closer] = k
    edges.sort(key=lambda e: (e[0], e[1]))
    return MSTState(tuple(edges), math.fsum(e[2] for e in edges))


def batch_group_features(members: Sequence[int], table: RegionTable) -> np.ndarray:
    """Group features computed from scratch over ``members``."""
    ids = np.asarray(sorted(members), dtype=np.int64)
    n = ids.size
    if n < 2:
        raise UndefinedGroupError("a group needs at least two members")
    vals = table.scalars[ids]
    mean = vals.mean(axis=0)
    std = vals.std(axis=0)
    cv = np.array([_cv(s, m) for s, m in zip(std, mean)])
    hu = table.hu[ids]
    iu, ju = np.triu_indices(n, 1)
    hu_mean = float(np.sqrt(((hu[iu] - hu[ju]) ** 2).sum(-1)).mean())
    mst = prim_mst(ids, table.centers)
    ij = np.array([(e[0], e[1]) for e in mst.edges], dtype=np.int64)
    widths = 0.5 * (table.scalars[ij[:, 0], _STROKE] + table.scalars[ij[:, 1], _STROKE])
    return _assemble(n, mean, std, cv, hu_mean, mst.angles(table.centers),
                     mst.lengths(), widths)
