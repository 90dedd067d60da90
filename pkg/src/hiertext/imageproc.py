"""Channel projections, MSER extraction and per-region descriptors."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np
from skimage.morphology import skeletonize

from . import _mser

CHANNEL_IDS = ("gray", "red", "green", "blue")

_CROSS = cv2.getStructuringElement(cv2.MORPH_CROSS, (3, 3))
_BOX = np.ones((3, 3), np.uint8)


class DecodeError(ValueError):
    """Raised for images that are not 8-bit gray or RGB."""


@dataclass
class ChannelImage:
    """One 8-bit projection of the input image."""

    data: np.ndarray
    channel_id: str = "gray"
    _gradient: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.dtype != np.uint8:
            raise DecodeError("channel data must be a 2-D uint8 array")
        if self.data.size == 0:
            raise DecodeError("empty channel")
        if self.channel_id not in CHANNEL_IDS:
            raise ValueError(f"unknown channel id {self.channel_id!r}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def gradient_magnitude(self) -> np.ndarray:
        """3x3 Sobel magnitude clamped to [0, 255] (cached)."""
        if self._gradient is None:
            gx = cv2.Sobel(self.data, cv2.CV_64F, 1, 0, ksize=3,
                           borderType=cv2.BORDER_REPLICATE)
            gy = cv2.Sobel(self.data, cv2.CV_64F, 0, 1, ksize=3,
                           borderType=cv2.BORDER_REPLICATE)
            self._gradient = np.minimum(np.hypot(gx, gy), 255.0)
        return self._gradient


def load_image(path) -> np.ndarray:
    """Read a PNG as an RGB (H, W, 3) or gray (H, W) uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DecodeError(f"{path}: not a decodable image")
    if img.dtype != np.uint8:
        raise DecodeError(f"{path}: unsupported bit depth {img.dtype}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[:, :, :3]
        img = np.ascontiguousarray(img[:, :, ::-1])
    return img


def save_png(path, array: np.ndarray) -> None:
    if array.ndim == 3 and array.shape[2] == 3:
        array = np.ascontiguousarray(array[:, :, ::-1])
    elif array.ndim == 3 and array.shape[2] == 4:
        array = np.ascontiguousarray(array[:, :, [2, 1, 0, 3]])
    if not cv2.imwrite(str(Path(path)), array):
        raise OSError(f"cannot write {path}")


def to_gray(image: np.ndarray) -> np.ndarray:
    rgb = image.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def project_channels(image: np.ndarray) -> list[ChannelImage]:
    """Gray, red, green and blue projections of an 8-bit image.

    A single-channel image yields only its gray channel.
    """
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise DecodeError(f"unsupported bit depth {image.dtype}")
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 2:
        return [ChannelImage(np.ascontiguousarray(image), "gray")]
    if image.ndim != 3 or image.shape[2] != 3:
        raise DecodeError(f"unsupported image shape {image.shape}")
    out = [ChannelImage(to_gray(image), "gray")]
    for i, cid in enumerate(("red", "green", "blue")):
        out.append(ChannelImage(np.ascontiguousarray(image[:, :, i]), cid))
    return out


@dataclass(frozen=True)
class MSERParams:
    delta: int = 5
    min_area: int = 30
    max_area_ratio: float = 0.4
    max_variation: float = 0.25
    min_diversity: float = 0.2

    def max_area(self, n_pixels: int) -> int:
        return int(self.max_area_ratio * n_pixels)

    def validate(self, n_pixels: int) -> None:
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if not 0 < self.min_area < self.max_area(n_pixels) <= n_pixels:
            raise ValueError("need 0 < min_area < max_area <= image area")
        if self.max_variation <= 0:
            raise ValueError("max_variation must be positive")


@dataclass
class Region:
    """A connected pixel set from one channel plus its descriptors.

    ``pixels`` holds sorted flat indices into the (height, width) image.
    Descriptor fields stay NaN until :func:`compute_region_features` runs.
    """

    pixels: np.ndarray
    shape: tuple
    channel_id: str = "gray"
    polarity: str = "dark"
    level: int = 0
    bounding_box: tuple = (0, 0, 0, 0)
    centroid: tuple = (0.0, 0.0)
    intensity_mean: float = np.nan
    boundary_intensity_mean: float = np.nan
    border_gradient_mean: float = np.nan
    major_axis: float = np.nan
    stroke_width_mean: float = np.nan
    hu_moments: np.ndarray = field(default_factory=lambda: np.full(7, np.nan))
    hull_compactness: float = np.nan
    convexity_defect_count: int = 0
    aspect_ratio: float = np.nan

    @property
    def area(self) -> int:
        return int(self.pixels.size)

    @property
    def ys(self) -> np.ndarray:
        return self.pixels // self.shape[1]

    @property
    def xs(self) -> np.ndarray:
        return self.pixels % self.shape[1]

    @property
    def has_features(self) -> bool:
        return not np.isnan(self.stroke_width_mean)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, bool)
        m.flat[self.pixels] = True
        return m


def region_from_pixels(pixels, shape, channel_id="gray", polarity="dark",
                       level=0) -> Region:
    pixels = np.unique(np.asarray(pixels, dtype=np.int64))
    if pixels.size == 0:
        raise ValueError("region must contain at least one pixel")
    w = shape[1]
    ys, xs = pixels // w, pixels % w
    return Region(
        pixels=pixels, shape=tuple(shape), channel_id=channel_id,
        polarity=polarity, level=int(level),
        bounding_box=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
        centroid=(float(xs.mean()), float(ys.mean())),
    )


def _extract_polarity(values, h, w, params, channel_id, polarity):
    _, parent, area, start = _mser.min_tree(values, h, w)
    nodes = _mser.select_mser(values, parent, area, params.delta,
                              params.min_area, params.max_area(h * w),
                              params.max_variation, params.min_diversity)
    if nodes.size == 0:
        return []
    flat = _mser.flatten(start)
    regions = []
    for p in nodes:
        s = start[p]
        pix = flat[s:s + area[p]]
        level = values[p] if polarity == "dark" else 255 - values[p]
        regions.append(region_from_pixels(pix, (h, w), channel_id, polarity, level))
    return regions


def extract_mser(channel: ChannelImage, params: MSERParams = MSERParams(),
                 polarities: Sequence[str] = ("dark", "bright")) -> list[Region]:
    """MSER regions of both polarities; descriptors are left unfilled."""
    h, w = channel.height, channel.width
    if h * w < 2 or params.max_area(h * w) <= params.min_area:
        return []
    params.validate(h * w)
    flat = channel.data.ravel()
    regions = []
    for pol in polarities:
        values = flat if pol == "dark" else (255 - flat).astype(np.uint8)
        regions.extend(_extract_polarity(np.ascontiguousarray(values), h, w,
                                         params, channel.channel_id, pol))
    return regions


def _hull_defects(contour: np.ndarray, min_depth: float) -> int:
    if len(contour) < 4:
        return 0
    hull_idx = np.sort(cv2.convexHull(contour, returnPoints=False).ravel())
    if hull_idx.size < 3:
        return 0
    pts = contour.reshape(-1, 2).astype(np.float64)
    n = len(pts)
    count = 0
    for a, b in zip(hull_idx, np.roll(hull_idx, -1)):
        if b <= a:
            b += n
        if b - a < 2:
            continue
        p0, p1 = pts[a], pts[b % n]
        seg = p1 - p0
        length = np.hypot(*seg)
        if length == 0:
            continue
        between = pts[np.arange(a + 1, b) % n] - p0
        depth = np.abs(seg[0] * between[:, 1] - seg[1] * between[:, 0]) / length
        if depth.max() > min_depth:
            count += 1
    return count


def compute_region_features(region: Region, channel: ChannelImage,
                            defect_depth: float = 2.0) -> Region:
    """Return a copy of ``region`` with every descriptor populated."""
    h, w = channel.height, channel.width
    if tuple(region.shape) != (h, w):
        raise ValueError("region and channel dimensions differ")
    ys, xs = region.ys, region.xs
    x0, y0, x1, y1 = region.bounding_box
    # one pixel of zero padding on each side of the bounding box
    mask = np.zeros((y1 - y0 + 3, x1 - x0 + 3), np.uint8)
    my, mx = ys - y0 + 1, xs - x0 + 1
    mask[my, mx] = 1

    img = channel.data
    intensity = float(img[ys, xs].mean())

    ring_y, ring_x = np.nonzero(cv2.dilate(mask, _BOX) & (1 - mask))
    ring_y = ring_y + y0 - 1
    ring_x = ring_x + x0 - 1
    inside = (ring_y >= 0) & (ring_y < h) & (ring_x >= 0) & (ring_x < w)
    if inside.any():
        boundary = float(img[ring_y[inside], ring_x[inside]].mean())
    else:
        boundary = intensity

    eroded = cv2.erode(mask, _CROSS, borderType=cv2.BORDER_CONSTANT, borderValue=0)
    by, bx = np.nonzero(mask & (1 - eroded))
    grad = channel.gradient_magnitude()
    gradient = float(grad[by + y0 - 1, bx + x0 - 1].mean())

    if region.area > 1:
        cov = np.cov(np.vstack([mx, my]).astype(np.float64), bias=True)
        major = 4.0 * float(np.sqrt(max(np.linalg.eigvalsh(cov)[-1], 0.0)))
    else:
        major = 0.0

    dist = cv2.distanceTransform(mask, cv2.DIST_L1, 3)
    skel = skeletonize(mask.astype(bool))
    samples = dist[skel] if skel.any() else np.array([dist.max()])
    stroke = float(np.mean(2.0 * samples - 1.0))

    hu = cv2.HuMoments(cv2.moments(mask, binaryImage=True)).ravel()

    contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    pts = np.concatenate([c.reshape(-1, 2) for c in contours]).astype(np.float32)
    corners = np.concatenate([pts + np.float32(d) for d in ((0, 0), (1, 0), (0, 1), (1, 1))]).astype(np.float32)
    hull_area = cv2.contourArea(cv2.convexHull(corners))
    compactness = min(region.area / hull_area, 1.0) if hull_area > 0 else 1.0
    outer = max(contours, key=len)
    defects = _hull_defects(outer, defect_depth)

    return replace(
        region,
        intensity_mean=intensity,
        boundary_intensity_mean=boundary,
        border_gradient_mean=gradient,
        major_axis=major,
        stroke_width_mean=stroke,
        hu_moments=hu,
        hull_compactness=float(compactness),
        convexity_defect_count=int(defects),
        aspect_ratio=(x1 - x0 + 1) / (y1 - y0 + 1),
    )


def extract_regions(channel: ChannelImage, params: MSERParams = MSERParams()) -> list[Region]:
    """MSER extraction followed by descriptor computation."""
    return [compute_region_features(r, channel) for r in extract_mser(channel, params)]
