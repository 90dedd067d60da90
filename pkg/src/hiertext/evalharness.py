"""Pixel-level and rectangle-level scoring of extraction outputs.

Localization follows the minimum-area-rectangle criterion used for
arbitrarily oriented text lines (axis-aligned IoU > 0.5 and an orientation
difference below pi/8). The Wolf-Jolion protocol is not implemented.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Rect, axial_difference, rect_iou

ANGLE_GATE = math.pi / 8
IOU_GATE = 0.5


class DimensionMismatch(ValueError):
    pass


def _f(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class PixelScore:
    precision: float
    recall: float
    fscore: float
    n_detected: int
    n_truth: int
    n_overlap: int

    @classmethod
    def from_counts(cls, n_e: int, n_t: int, n_et: int) -> "PixelScore":
        if n_e == 0 and n_t == 0:
            return cls(1.0, 1.0, 1.0, 0, 0, 0)
        p = n_et / n_e if n_e else 0.0
        r = n_et / n_t if n_t else 0.0
        return cls(p, r, _f(p, r), n_e, n_t, n_et)

    def to_dict(self) -> dict:
        return asdict(self)


def pixel_score(E: np.ndarray, T: np.ndarray) -> PixelScore:
    E = np.asarray(E) > 0
    T = np.asarray(T) > 0
    if E.shape != T.shape:
        raise DimensionMismatch(f"mask shapes differ: {E.shape} vs {T.shape}")
    return PixelScore.from_counts(int(E.sum()), int(T.sum()), int((E & T).sum()))


def aggregate_pixel_scores(scores: Iterable[PixelScore]) -> PixelScore:
    """Corpus score from summed pixel counts."""
    n_e = n_t = n_et = 0
    for s in scores:
        n_e += s.n_detected
        n_t += s.n_truth
        n_et += s.n_overlap
    return PixelScore.from_counts(n_e, n_t, n_et)


@dataclass(frozen=True)
class LocalizationScore:
    precision: float
    recall: float
    fscore: float
    true_positives: int
    n_detected: int
    n_truth: int

    def to_dict(self) -> dict:
        return asdict(self)


def _as_rect(r) -> Rect:
    if isinstance(r, Rect):
        return r
    return Rect(float(r["cx"]), float(r["cy"]), float(r["w"]), float(r["h"]),
                float(r.get("angle_rad", r.get("angle", 0.0))))


def rect_match(D, G) -> bool:
    D, G = _as_rect(D), _as_rect(G)
    return (rect_iou(D.axis_aligned(), G.axis_aligned()) > IOU_GATE
            and axial_difference(D.angle, G.angle) < ANGLE_GATE)


def localization_score(E: Sequence, T: Sequence) -> LocalizationScore:
    """Greedy one-to-one matching in descending IoU order."""
    E = [_as_rect(r) for r in E]
    T = [_as_rect(r) for r in T]
    cands = []
    for i, d in enumerate(E):
        for j, g in enumerate(T):
            if rect_match(d, g):
                cands.append((rect_iou(d.axis_aligned(), g.axis_aligned()), i, j))
    # ties broken by rectangle geometry so the result ignores input order
    cands.sort(key=lambda c: (-c[0], _key(E[c[1]]), _key(T[c[2]])))
    used_e, used_t = set(), set()
    tp = 0
    for _, i, j in cands:
        if i in used_e or j in used_t:
            continue
        used_e.add(i)
        used_t.add(j)
        tp += 1
    p = tp / len(E) if E else 1.0
    r = tp / len(T) if T else 1.0
    return LocalizationScore(p, r, _f(p, r), tp, len(E), len(T))


def _key(r: Rect):
    return (r.cx, r.cy, r.w, r.h, r.angle)


def aggregate_localization(scores: Iterable[LocalizationScore]) -> LocalizationScore:
    tp = ne = nt = 0
    for s in scores:
        tp += s.true_positives
        ne += s.n_detected
        nt += s.n_truth
    p = tp / ne if ne else 1.0
    r = tp / nt if nt else 1.0
    return LocalizationScore(p, r, _f(p, r), tp, ne, nt)


def pr_sweep(prepared: Sequence, truths: Sequence[np.ndarray], thresholds: Sequence[float],
             finalize) -> list:
    """(threshold, precision, recall) per threshold, thresholds sorted ascending.

    ``prepared`` holds per-image state that ``finalize(state, threshold)``
    turns into a detection mask; pixel counts are summed over the corpus.
    """
    thresholds = sorted(float(t) for t in thresholds)
    if len(thresholds) < 2:
        raise ValueError("a sweep needs at least two thresholds")
    rows = []
    for t in thresholds:
        scores = [pixel_score(finalize(state, t), truth)
                  for state, truth in zip(prepared, truths)]
        agg = aggregate_pixel_scores(scores)
        rows.append((t, agg.precision, agg.recall))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "precision", "recall"])
    for t, p, r in rows:
        w.writerow([repr(t), repr(p), repr(r)])
    return buf.getvalue()
