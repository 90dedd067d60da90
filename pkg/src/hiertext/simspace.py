"""Weighted similarity space used to agglomerate regions."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FEATURE_NAMES = (
    "intensity_mean",
    "boundary_intensity_mean",
    "border_gradient_mean",
    "major_axis",
    "stroke_width_mean",
)


@dataclass(frozen=True)
class SimilarityVector:
    f: tuple
    center: tuple

    @classmethod
    def from_region(cls, region) -> "SimilarityVector":
        return cls(tuple(float(getattr(region, n)) for n in FEATURE_NAMES),
                   tuple(map(float, region.centroid)))


@dataclass(frozen=True)
class WeightConfig:
    w: tuple
    label: str = "w"

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if len(w) != 5:
            raise ValueError("a weight config has exactly 5 weights")
        if not all(np.isfinite(x) and x >= 0 for x in w):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "w", w)

    def to_json(self) -> str:
        return json.dumps({"label": self.label, "w": list(self.w)})

    @classmethod
    def from_json(cls, text: str) -> "WeightConfig":
        obj = json.loads(text)
        return cls(tuple(obj["w"]), obj.get("label", "w"))


def default_optimal_weights() -> WeightConfig:
    return WeightConfig((0.65, 0.65, 0.49, 0.67, 0.91), "w_opt")


def identity_weights() -> WeightConfig:
    return WeightConfig((1.0, 1.0, 1.0, 1.0, 1.0), "w_I")


def distance(a: SimilarityVector, b: SimilarityVector, w: WeightConfig) -> float:
    total = 0.0
    for wi, ai, bi in zip(w.w, a.f, b.f):
        d = wi * (ai - bi)
        total += d * d
    dx = a.center[0] - b.center[0]
    dy = a.center[1] - b.center[1]
    return total + (dx * dx + dy * dy)


def feature_matrix(regions: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """(n, 5) similarity features and (n, 2) centers of a region list."""
    feats = np.array([[getattr(r, n) for n in FEATURE_NAMES] for r in regions],
                     dtype=np.float64).reshape(-1, 5)
    centers = np.array([r.centroid for r in regions], dtype=np.float64).reshape(-1, 2)
    return feats, centers


def pairwise_distances(feats: np.ndarray, centers: np.ndarray, w: WeightConfig) -> np.ndarray:
    """Dense matrix of the weighted distance; entry (i, j) equals distance(i, j)."""
    n = len(feats)
    out = np.zeros((n, n))
    for i in range(5):
        d = w.w[i] * (feats[:, i:i + 1] - feats[:, i][None, :])
        out += d * d
    dx = centers[:, 0:1] - centers[:, 0][None, :]
    dy = centers[:, 1:2] - centers[:, 1][None, :]
    return out + (dx * dx + dy * dy)
