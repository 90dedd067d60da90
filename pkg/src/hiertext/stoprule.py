"""Meaningfulness (NFA) of cluster nodes and the final group selection.

NFA values are handled as natural logarithms: tails for tight groups in
large channels underflow double precision long before they stop being
comparable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .groupdesc import MAX_CLUSTER_SIZE

EXTENT_FLOOR = 1e-4
P_FLOOR = 1e-12


def log_binomial_tail(k: int, n: int, p: float) -> float:
    """log P[X >= k] for X ~ Binomial(n, p)."""
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if k == 0 or p == 1.0:
        return 0.0
    if p == 0.0:
        return -math.inf
    if k == n:
        return n * math.log(p)
    i = np.arange(k, n + 1, dtype=np.float64)
    terms = (gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
             + i * math.log(p) + (n - i) * math.log1p(-p))
    return min(float(logsumexp(terms)), 0.0)


def binomial_tail(k: int, n: int, p: float) -> float:
    return math.exp(log_binomial_tail(k, n, p))


@dataclass(frozen=True)
class NfaContext:
    n: int
    feature_ranges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("NfaContext.n must be >= 1")
        if len(self.feature_ranges) != 5 or any(hi <= lo for lo, hi in self.feature_ranges):
            raise ValueError("need 5 (lo, hi) ranges with hi > lo")

    @classmethod
    def for_image(cls, n_regions: int, width: int, height: int) -> "NfaContext":
        diag = math.hypot(width, height)
        return cls(max(n_regions, 1), ((0.0, 255.0), (0.0, 255.0), (0.0, 255.0),
                                       (0.0, diag), (0.0, diag)))


def volume_ratio(fmin, fmax, ctx: NfaContext) -> float:
    p = 1.0
    for lo_f, hi_f, (lo, hi) in zip(fmin, fmax, ctx.feature_ranges):
        p *= min(max((hi_f - lo_f) / (hi - lo), EXTENT_FLOOR), 1.0)
    return max(p, P_FLOOR)


def log_nfa(stats, ctx: NfaContext) -> Optional[float]:
    """log NFA of a node's statistics; None for singletons and oversize nodes."""
    if stats is None or stats.oversize or stats.count < 2:
        return None
    p = volume_ratio(stats.fmin, stats.fmax, ctx)
    return log_binomial_tail(stats.count, max(ctx.n, stats.count), p)


def nfa(stats, ctx: NfaContext) -> Optional[float]:
    v = log_nfa(stats, ctx)
    return None if v is None else math.exp(v)


def is_eligible(node, max_cluster_size: int = MAX_CLUSTER_SIZE) -> bool:
    st = node.stats
    return 2 <= node.size <= max_cluster_size and (st is None or not st.oversize)


def annotate(dend, ctx: NfaContext, model=None, accept_threshold: Optional[float] = None,
             max_cluster_size: int = MAX_CLUSTER_SIZE) -> None:
    """Attach log NFA, classifier score and text label to eligible nodes."""
    from .groupdesc import group_features

    table = None
    eligible = [n for n in dend.internal_nodes() if is_eligible(n, max_cluster_size)]
    for node in eligible:
        node.log_nfa = log_nfa(node.stats, ctx)
    if model is None:
        return
    if eligible:
        table = getattr(dend, "table", None)
        X = np.array([group_features(n.stats, table) for n in eligible])
        scores = model.decision_function(X)
        t = model.accept_threshold if accept_threshold is None else accept_threshold
        for node, s in zip(eligible, scores):
            node.score = float(s)
            node.label = bool(s > t)


def relabel(dend, accept_threshold: float) -> None:
    for node in dend.internal_nodes():
        if node.score is not None:
            node.label = bool(node.score > accept_threshold)


def select_groups(dend) -> list:
    """Text-labeled nodes strictly more meaningful than every text-labeled
    node above or below them. Nested nodes with equal NFA exclude each other."""
    nodes = dend.nodes
    total = len(nodes)
    text = [bool(n.label) and n.log_nfa is not None for n in nodes]
    inf = math.inf
    # minimum log NFA over text-labeled strict descendants (children precede parents)
    below = [inf] * total
    for node in nodes:
        if node.children:
            a, b = node.children
            va = min(below[a], nodes[a].log_nfa if text[a] else inf)
            vb = min(below[b], nodes[b].log_nfa if text[b] else inf)
            below[node.node_id] = min(va, vb)
    above = [inf] * total
    for node in reversed(nodes):
        p = node.parent
        if p is not None:
            above[node.node_id] = min(above[p], nodes[p].log_nfa if text[p] else inf)
    out = []
    for node in nodes:
        i = node.node_id
        if text[i] and node.log_nfa < below[i] and node.log_nfa < above[i]:
            out.append(node)
    return out
