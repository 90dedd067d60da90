"""Single-linkage dendrograms over the regions of one channel.

Single linkage merges are the edges of a minimum spanning tree taken in
increasing order, so the tree is built with an O(n^2) Prim pass over the
implicit distance matrix. Equal-distance merges are resolved exactly as the
naive agglomerative loop would: among all cluster pairs at the tied distance,
the pair with the smallest (min label, max label) merges first, where a
cluster's label is its smallest member id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import groupdesc
from .groupdesc import IncrementalStats, RegionTable
from .simspace import WeightConfig, feature_matrix, pairwise_distances


@dataclass
class ClusterNode:
    node_id: int
    children: tuple = ()
    merge_distance: float = 0.0
    size: int = 1
    parent: Optional[int] = None
    stats: Optional[IncrementalStats] = None
    log_nfa: Optional[float] = None
    score: Optional[float] = None
    label: Optional[bool] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class Dendrogram:
    """Binary merge tree. Leaves are ids 0..n-1, internal nodes follow in
    merge order, so every child id is smaller than its parent id."""

    nodes: list
    n_leaves: int
    channel_id: str = "gray"
    weight_label: str = "w"
    leaf_order: np.ndarray = field(default=None, repr=False)
    start: np.ndarray = field(default=None, repr=False)
    table: Optional[RegionTable] = field(default=None, repr=False)

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    def members(self, node_id: int) -> np.ndarray:
        """Member region ids of a node (a contiguous slice of the leaf order)."""
        s = self.start[node_id]
        return self.leaf_order[s:s + self.nodes[node_id].size]

    def internal_nodes(self):
        return self.nodes[self.n_leaves:]

    def merges(self) -> list:
        """(member set A, member set B, distance) per merge, in merge order."""
        out = []
        for node in self.internal_nodes():
            a, b = node.children
            out.append((frozenset(self.members(a).tolist()),
                        frozenset(self.members(b).tolist()), node.merge_distance))
        return out

    def ancestors(self, node_id: int):
        p = self.nodes[node_id].parent
        while p is not None:
            yield p
            p = self.nodes[p].parent

    def to_json(self) -> str:
        return json.dumps({
            "channel": self.channel_id,
            "weights": self.weight_label,
            "nodes": [{
                "id": n.node_id,
                "children": list(n.children),
                "merge_distance": n.merge_distance,
                "members": self.members(n.node_id).tolist(),
            } for n in self.nodes],
        })


@njit(cache=True)
def _pair_distance(feats, centers, w, i, j):
    total = 0.0
    for f in range(5):
        t = w[f] * (feats[i, f] - feats[j, f])
        total += t * t
    dx = centers[i, 0] - centers[j, 0]
    dy = centers[i, 1] - centers[j, 1]
    return total + (dx * dx + dy * dy)


@njit(cache=True)
def prim_edges(feats, centers, w):
    """Minimum spanning tree of the weighted distance graph."""
    n = feats.shape[0]
    in_tree = np.zeros(n, np.bool_)
    best = np.full(n, np.inf)
    link = np.zeros(n, np.int64)
    ei = np.empty(n - 1, np.int64)
    ej = np.empty(n - 1, np.int64)
    ed = np.empty(n - 1, np.float64)
    cur = 0
    in_tree[0] = True
    for step in range(n - 1):
        for k in range(n):
            if not in_tree[k]:
                d = _pair_distance(feats, centers, w, cur, k)
                if d < best[k]:
                    best[k] = d
                    link[k] = cur
        kmin = -1
        bmin = np.inf
        for k in range(n):
            if not in_tree[k] and (kmin < 0 or best[k] < bmin):
                bmin = best[k]
                kmin = k
        ei[step] = link[kmin]
        ej[step] = kmin
        ed[step] = bmin
        in_tree[kmin] = True
        cur = kmin
    return ei, ej, ed


class _Clusters:
    """Union-find over leaves that also tracks node ids and labels."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.node = list(range(n))
        self.label = list(range(n))
        self.members = [[i] for i in range(n)]

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, ra, rb, node_id):
        if len(self.members[ra]) < len(self.members[rb]):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.members[ra].extend(self.members[rb])
        self.members[rb] = []
        self.label[ra] = min(self.label[ra], self.label[rb])
        self.node[ra] = node_id
        return ra


def _tied_pairs(roots, clusters, feats, centers, w, d):
    """Cluster-root pairs joined by at least one edge of length exactly d."""
    ids = [m for r in roots for m in clusters.members[r]]
    owner = {m: r for r in roots for m in clusters.members[r]}
    idx = np.array(ids, dtype=np.int64)
    dm = pairwise_distances(feats[idx], centers[idx], w)
    pairs = set()
    ii, jj = np.nonzero(np.triu(dm == d, 1))
    for a, b in zip(ii, jj):
        ra, rb = owner[ids[a]], owner[ids[b]]
        if ra != rb:
            pairs.add((min(ra, rb), max(ra, rb)))
    return pairs


def build_dendrogram(regions: Sequence, w: WeightConfig, *, channel_id: Optional[str] = None,
                     with_stats: bool = True, table: Optional[RegionTable] = None,
                     max_cluster_size: int = groupdesc.MAX_CLUSTER_SIZE) -> Dendrogram:
    """Single-linkage dendrogram of ``regions`` under weights ``w``.

    When ``with_stats`` is set, incremental group statistics are merged into
    each node as it is created.
    """
    n = len(regions)
    if n == 0:
        raise ValueError("cannot cluster an empty region set")
    if channel_id is None:
        channel_id = getattr(regions[0], "channel_id", "gray")
    feats, centers = feature_matrix(regions)
    if with_stats and table is None:
        table = RegionTable.from_regions(regions)
    return _build(feats, centers, w, n, channel_id, table if with_stats else None,
                  max_cluster_size)


def build_from_arrays(feats, centers, w: WeightConfig, **kw) -> Dendrogram:
    """Topology-only dendrogram from raw (n, 5) features and (n, 2) centers."""
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    return _build(feats, centers, w, len(feats), kw.get("channel_id", "gray"),
                  kw.get("table"), kw.get("max_cluster_size", groupdesc.MAX_CLUSTER_SIZE))


def _build(feats, centers, w, n, channel_id, table, max_cluster_size):
    nodes = [ClusterNode(i) for i in range(n)]
    if table is not None:
        for i in range(n):
            nodes[i].stats = groupdesc.stats_from_table(table, i)
    clusters = _Clusters(n)
    warr = np.asarray(w.w, dtype=np.float64)

    def merge(ra, rb, d):
        node_id = len(nodes)
        a, b = clusters.node[ra], clusters.node[rb]
        if clusters.label[rb] < clusters.label[ra]:
            a, b = b, a
        node = ClusterNode(node_id, (a, b), float(d), nodes[a].size + nodes[b].size)
        if table is not None:
            node.stats = groupdesc.merge_stats(nodes[a].stats, nodes[b].stats, table,
                                               max_cluster_size)
        nodes[a].parent = node_id
        nodes[b].parent = node_id
        nodes.append(node)
        return clusters.union(ra, rb, node_id)

    if n > 1:
        ei, ej, ed = prim_edges(feats, centers, warr)
        order = np.argsort(ed, kind="stable")
        k = 0
        while k < len(order):
            d = ed[order[k]]
            group = [order[k]]
            k += 1
            while k < len(order) and ed[order[k]] == d:
                group.append(order[k])
                k += 1
            if len(group) == 1:
                e = group[0]
                merge(clusters.find(int(ei[e])), clusters.find(int(ej[e])), d)
                continue
            roots = sorted({clusters.find(int(x)) for e in group for x in (ei[e], ej[e])})
            pairs = _tied_pairs(roots, clusters, feats, centers, w, d)
            while pairs:
                ra, rb = min(pairs, key=lambda p: tuple(sorted(
                    (clusters.label[p[0]], clusters.label[p[1]]))))
                new = merge(ra, rb, d)
                gone = {ra, rb}
                updated = set()
                for p, q in pairs:
                    p = new if p in gone else p
                    q = new if q in gone else q
                    if p != q:
                        updated.add((min(p, q), max(p, q)))
                pairs = updated

    dend = Dendrogram(nodes, n, channel_id, w.label, table=table)
    _index_leaves(dend)
    return dend


def _index_leaves(dend: Dendrogram) -> None:
    total = len(dend.nodes)
    start = np.zeros(total, np.int64)
    for node in reversed(dend.nodes):
        if node.children:
            a, b = node.children
            start[a] = start[node.node_id]
            start[b] = start[node.node_id] + dend.nodes[a].size
    leaf_order = np.empty(dend.n_leaves, np.int64)
    leaf_order[start[:dend.n_leaves]] = np.arange(dend.n_leaves)
    dend.start = start
    dend.leaf_order = leaf_order
