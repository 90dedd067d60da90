"""Fusion of selected groups across dendrograms and output generation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Rect, axial_difference, min_area_rect, normalize_angle, pixel_outline


@dataclass(frozen=True)
class PostprocParams:
    dedup_iou: float = 0.8
    merge_angle: float = math.radians(10.0)
    merge_gap: float = 2.0        # nearest-member gap / max mean height
    merge_height_ratio: float = 2.0
    merge_offset: float = 0.5     # perpendicular offset / max mean height
    split_factor: float = 2.5


def _principal_angle(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    c = points - points.mean(axis=0)
    cov = c.T @ c
    evals, evecs = np.linalg.eigh(cov)
    vx, vy = evecs[:, -1]
    return normalize_angle(math.atan2(vy, vx))


@dataclass
class TextGroup:
    regions: list
    log_nfa: float = 0.0
    source: str = ""
    level: str = "line"
    baseline: float = 0.0
    pixels: np.ndarray = field(default=None, repr=False)
    shape: tuple = (0, 0)
    rect: Optional[Rect] = None
    mean_height: float = 0.0

    @property
    def centers(self) -> np.ndarray:
        return np.array([r.centroid for r in self.regions], dtype=np.float64).reshape(-1, 2)

    @property
    def centroid(self) -> np.ndarray:
        return self.centers.mean(axis=0)


def make_group(regions: Sequence, log_nfa: float = 0.0, source: str = "",
               level: str = "line", baseline: Optional[float] = None) -> TextGroup:
    regions = list(regions)
    if not regions:
        raise ValueError("a text group needs at least one region")
    shape = tuple(regions[0].shape)
    pixels = np.unique(np.concatenate([r.pixels for r in regions]))
    centers = np.array([r.centroid for r in regions], dtype=np.float64)
    if baseline is None:
        if len(regions) >= 2:
            baseline = _principal_angle(centers)
        else:
            r = regions[0]
            baseline = _principal_angle(np.stack([r.xs, r.ys], 1).astype(np.float64))
    nx, ny = -math.sin(baseline), math.cos(baseline)
    heights = []
    for r in regions:
        proj = r.xs * nx + r.ys * ny
        heights.append(float(proj.max() - proj.min()) + 1.0)
    ys, xs = pixels // shape[1], pixels % shape[1]
    rect = min_area_rect(pixel_outline(xs, ys))
    return TextGroup(regions, float(log_nfa), source, level, float(baseline), pixels,
                     shape, rect, float(np.mean(heights)))


def pixel_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.intersect1d(a, b, assume_unique=True).size
    union = a.size + b.size - inter
    return inter / union if union else 1.0


def deduplicate(groups: Sequence[TextGroup], iou_threshold: float = 0.8) -> list:
    """Collapse groups whose footprints overlap by IoU > threshold; the group
    with the lower NFA survives."""
    order = sorted(range(len(groups)), key=lambda i: (groups[i].log_nfa, i))
    kept = []
    for i in order:
        g = groups[i]
        if all(pixel_iou(g.pixels, k.pixels) <= iou_threshold for k in kept):
            kept.append(g)
    rank = {id(g): i for i, g in enumerate(groups)}
    return sorted(kept, key=lambda g: rank[id(g)])


def _unique_regions(regions, iou_threshold=0.8):
    out = []
    for r in regions:
        if all(pixel_iou(r.pixels, o.pixels) <= iou_threshold for o in out):
            out.append(r)
    return out


def _mergeable(a: TextGroup, b: TextGroup, p: PostprocParams) -> bool:
    if axial_difference(a.baseline, b.baseline) >= p.merge_angle:
        return False
    ha, hb = a.mean_height, b.mean_height
    if max(ha, hb) / min(ha, hb) >= p.merge_height_ratio:
        return False
    hmax = max(ha, hb)
    ca, cb = a.centers, b.centers
    gap = np.sqrt(((ca[:, None, :] - cb[None, :, :]) ** 2).sum(-1)).min()
    if gap >= p.merge_gap * hmax:
        return False
    longer = a if len(a.regions) >= len(b.regions) else b
    nx, ny = -math.sin(longer.baseline), math.cos(longer.baseline)
    d = a.centroid - b.centroid
    return abs(d[0] * nx + d[1] * ny) < p.merge_offset * hmax


def _merge_pass(groups, p):
    n = len(groups)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) != find(j) and _mergeable(groups[i], groups[j], p):
                parent[find(j)] = find(i)
    comps = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    if all(len(c) == 1 for c in comps.values()):
        return list(groups), False
    out = []
    for root in sorted(comps):
        idx = comps[root]
        if len(idx) == 1:
            out.append(groups[idx[0]])
            continue
        regs = _unique_regions([r for i in idx for r in groups[i].regions])
        out.append(make_group(regs, min(groups[i].log_nfa for i in idx),
                              "+".join(sorted({groups[i].source for i in idx})), "line"))
    return out, True


def merge_collinear(groups: Sequence[TextGroup], params: PostprocParams = PostprocParams()) -> list:
    """Transitively merge collinear, nearby groups of similar height, to a fixpoint."""
    groups = list(groups)
    changed = True
    while changed:
        groups, changed = _merge_pass(groups, params)
    return groups


def split_words(group: TextGroup, factor: float = 2.5) -> list:
    """Cut a line wherever the gap between consecutive characters exceeds
    ``factor`` times the mean gap.

    Members whose extents along the baseline overlap (nested or repeated
    detections of one glyph) form a single character slot, so duplicates do
    not shrink the mean gap.
    """
    if len(group.regions) < 2:
        raise ValueError("splitting needs at least two members")
    c, s = math.cos(group.baseline), math.sin(group.baseline)
    lo = np.array([float((r.xs * c + r.ys * s).min()) for r in group.regions])
    hi = np.array([float((r.xs * c + r.ys * s).max()) for r in group.regions])
    proj = group.centers @ np.array([c, s])
    order = np.lexsort((proj, lo))
    slots, end = [[order[0]]], hi[order[0]]
    for k in order[1:]:
        if lo[k] <= end:
            slots[-1].append(k)
            end = max(end, hi[k])
        else:
            slots.append([k])
            end = hi[k]
    if len(slots) < 2:
        return [make_group(group.regions, group.log_nfa, group.source, "word", group.baseline)]
    centers = np.array([proj[sl].mean() for sl in slots])
    gaps = np.diff(centers)
    limit = factor * gaps.mean()
    words, current = [], list(slots[0])
    for gap, sl in zip(gaps, slots[1:]):
        if gap > limit:
            words.append(current)
            current = []
        current.extend(sl)
    words.append(current)
    return [make_group([group.regions[k] for k in w], group.log_nfa, group.source, "word",
                       group.baseline) for w in words]


def emit_outputs(groups: Sequence[TextGroup], shape) -> tuple:
    """Binary mask (0/255) and one rectangle record per group."""
    mask = np.zeros(tuple(shape)[:2], np.uint8)
    rects = []
    for g in groups:
        mask.flat[g.pixels] = 255
        r = g.rect
        rects.append({"cx": r.cx, "cy": r.cy, "w": r.w, "h": r.h,
                      "angle_rad": r.angle, "level": g.level})
    return mask, rects
