"""Planar helpers: convex hulls and minimum-area rectangles."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    """Rotated rectangle; ``w`` runs along ``angle`` (image axes, y down)."""

    cx: float
    cy: float
    w: float
    h: float
    angle: float

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = np.array([c, s]) * self.w / 2
        v = np.array([-s, c]) * self.h / 2
        ctr = np.array([self.cx, self.cy])
        return np.array([ctr - u - v, ctr + u - v, ctr + u + v, ctr - u + v])

    def axis_aligned(self) -> "Rect":
        return Rect(self.cx, self.cy, self.w, self.h, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)


def normalize_angle(theta: float) -> float:
    """Map an axial angle into [-pi/2, pi/2)."""
    t = math.fmod(theta + math.pi / 2, math.pi)
    if t < 0:
        t += math.pi
    return t - math.pi / 2


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; counter-clockwise hull without repeats."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                (ax, ay), (bx, by) = out[-2], out[-1]
                if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) <= 0:
                    out.pop()
                else:
                    break
            out.append((p[0], p[1]))
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def pixel_outline(xs, ys) -> np.ndarray:
    """Corner points of the leftmost and rightmost pixel of every row.

    Their convex hull equals the hull of all pixel squares.
    """
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    rows = np.unique(ys)
    lo = np.full(rows.size, np.iinfo(np.int64).max)
    hi = np.full(rows.size, np.iinfo(np.int64).min)
    k = np.searchsorted(rows, ys)
    np.minimum.at(lo, k, xs)
    np.maximum.at(hi, k, xs)
    return np.concatenate([
        np.stack([lo, rows], 1), np.stack([lo, rows + 1], 1),
        np.stack([hi + 1, rows], 1), np.stack([hi + 1, rows + 1], 1),
    ]).astype(np.float64)


def min_area_rect(points) -> Rect:
    """Minimum-area enclosing rectangle by rotating calipers over hull edges.

    The returned rectangle has w >= h and angle in [-pi/2, pi/2).
    """
    hull = convex_hull(points)
    if len(hull) == 0:
        raise ValueError("no points")
    if len(hull) == 1:
        return Rect(float(hull[0, 0]), float(hull[0, 1]), 0.0, 0.0, 0.0)
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    best = None
    for theta in angles:
        c, s = math.cos(theta), math.sin(theta)
        u = hull[:, 0] * c + hull[:, 1] * s
        v = -hull[:, 0] * s + hull[:, 1] * c
        area = (u.max() - u.min()) * (v.max() - v.min())
        if best is None or area < best[0] - 1e-9:
            best = (area, theta, u.min(), u.max(), v.min(), v.max())
    _, theta, u0, u1, v0, v1 = best
    c, s = math.cos(theta), math.sin(theta)
    uc, vc = (u0 + u1) / 2, (v0 + v1) / 2
    cx, cy = uc * c - vc * s, uc * s + vc * c
    w, h = u1 - u0, v1 - v0
    if w < h:
        w, h = h, w
        theta += math.pi / 2
    return Rect(float(cx), float(cy), float(w), float(h), normalize_angle(theta))


def rect_iou(a: Rect, b: Rect) -> float:
    """IoU of two axis-aligned rectangles (angles ignored)."""
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def axial_difference(a: float, b: float) -> float:
    """Difference of two axial angles, wrapped into [0, pi/2]."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)
