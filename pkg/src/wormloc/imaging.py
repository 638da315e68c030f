"""Classical image pipeline: thresholding, components, cropping, augmentation.

Conventions used throughout the package:
  * a grayscale image is a 2-D float array indexed ``img[y, x]`` with
    intensities in [0, 1];
  * a binary mask is a 2-D bool array of the same layout;
  * point coordinates are continuous ``(x, y)`` pairs with pixel centers
    at integer positions, so pixel (0, 0) covers [-0.5, 0.5]^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage


class BoundingBox(NamedTuple):
    """Inclusive top-left corner plus size, in whole pixels."""

    x0: int
    y0: int
    w: int
    h: int


class PixelPoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class CoordTransform:
    """Axis-aligned affine map ``(x, y) -> (x*sx + ox, y*sy + oy)``."""

    sx: float
    sy: float
    ox: float
    oy: float

    def apply(self, p: PixelPoint) -> PixelPoint:
        return PixelPoint(p.x * self.sx + self.ox, p.y * self.sy + self.oy)

    def inverse(self) -> "CoordTransform":
        return CoordTransform(1.0 / self.sx, 1.0 / self.sy,
                              -self.ox / self.sx, -self.oy / self.sy)


@dataclass
class PreprocessConfig:
    """Knobs for the threshold -> component -> crop pipeline.

    The polarity default suits the bundled synthetic data (bright worm on
    dark background); typical brightfield micrographs need ``"dark"``.
    """

    block: int = 51
    c: float = 0.02
    polarity: str = "bright"
    connectivity: int = 8
    pad_frac: float = 0.10
    out_size: int = 150


def _window_mean(img: np.ndarray, block: int) -> np.ndarray:
    """Mean over a block x block window intersected with the image bounds."""
    h, w = img.shape
    r = block // 2
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(img, axis=0), axis=1)
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    s = ii[y1[:, None], x1[None, :]] - ii[y0[:, None], x1[None, :]] \
        - ii[y1[:, None], x0[None, :]] + ii[y0[:, None], x0[None, :]]
    area = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return s / area


def adaptive_threshold(img: np.ndarray, block: int = 51, c: float = 0.02,
                       polarity: str = "dark") -> np.ndarray:
    """Binarize against the local window mean.

    A pixel is foreground iff it is below ``mean - c`` (``polarity="dark"``)
    or above ``mean + c`` (``polarity="bright"``). Windows are clamped at
    the image border, so edge means average over fewer pixels.
    """
    h, w = img.shape
    if block % 2 == 0 or block < 3 or block > min(h, w):
        raise ValueError(f"block must be odd and in [3, {min(h, w)}], got {block}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    mean = _window_mean(img, block)
    if polarity == "dark":
        return img < mean - c
    if polarity == "bright":
        return img > mean + c
    raise ValueError(f"polarity must be 'dark' or 'bright', got {polarity!r}")


def largest_component(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, BoundingBox]:
    """Extract the biggest connected blob and its tight bounding box.

    Size ties break toward the component whose box top-left (y0, x0) is
    lexicographically smallest.
    """
    if connectivity == 4:
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    elif connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(mask, structure=structure)
    if n == 0:
        raise ValueError("mask has no foreground pixels")
    sizes = np.bincount(labels.ravel())[1:]
    best = None
    for lab in np.flatnonzero(sizes == sizes.max()) + 1:
        ys, xs = np.nonzero(labels == lab)
        key = (ys.min(), xs.min())
        if best is None or key < best[0]:
            best = (key, lab, ys, xs)
    _, lab, ys, xs = best
    comp = labels == lab
    box = BoundingBox(int(xs.min()), int(ys.min()),
                      int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
    return comp, box


def pad_box(box: BoundingBox, frac: float, img_w: int, img_h: int) -> BoundingBox:
    """Grow a box by ``frac`` of its larger side, clamped to the image."""
    pad = int(round(frac * max(box.w, box.h)))
    x0 = max(0, box.x0 - pad)
    y0 = max(0, box.y0 - pad)
    x1 = min(img_w, box.x0 + box.w + pad)
    y1 = min(img_h, box.y0 + box.h + pad)
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def crop_resize(img: np.ndarray, box: BoundingBox, out: int = 150) -> tuple[np.ndarray, CoordTransform]:
    """Resample a box to an ``out`` x ``out`` crop with bilinear interpolation.

    Returns the crop and the forward affine transform taking source-image
    points into crop coordinates. The box region [x0-0.5, x0+w-0.5] maps
    onto the crop extent [-0.5, out-0.5], so a box of exactly ``out`` pixels
    becomes a pure translation.
    """
    h, w = img.shape
    if box.w <= 0 or box.h <= 0 or box.x0 < 0 or box.y0 < 0 \
            or box.x0 + box.w > w or box.y0 + box.h > h:
        raise ValueError(f"box {box} does not fit inside {w}x{h} image")
    sx = out / box.w
    sy = out / box.h
    fwd = CoordTransform(sx, sy, (0.5 - box.x0) * sx - 0.5, (0.5 - box.y0) * sy - 0.5)
    inv = fwd.inverse()
    cx = np.arange(out) * inv.sx + inv.ox
    cy = np.arange(out) * inv.sy + inv.oy
    coords = np.stack(np.meshgrid(cy, cx, indexing="ij"))
    crop = ndimage.map_coordinates(img.astype(np.float64), coords, order=1, mode="nearest")
    return crop.astype(img.dtype, copy=False), fwd


def transfer_label(p: PixelPoint, fwd: CoordTransform, out: int) -> PixelPoint | None:
    """Map a source-image label into crop coordinates.

    Returns None when the mapped point falls outside the crop extent
    [-0.5, out-0.5]^2, signalling that the sample should be dropped.
    """
    q = fwd.apply(p)
    if -0.5 <= q.x <= out - 0.5 and -0.5 <= q.y <= out - 0.5:
        return q
    return None


def augment_brightness(img: np.ndarray, rng: np.random.Generator,
                       max_frac: float = 0.125) -> np.ndarray:
    """Add one uniform offset from [-max_frac, +max_frac], clamped to [0, 1]."""
    if not 0.0 <= max_frac <= 1.0:
        raise ValueError(f"max_frac must be in [0, 1], got {max_frac}")
    delta = rng.uniform(-max_frac, max_frac)
    return np.clip(img + img.dtype.type(delta), 0.0, 1.0)


def rotate_point(p: PixelPoint, k: int, size: int) -> PixelPoint:
    """Rotate a point by k*90 degrees counter-clockwise about the image center."""
    x, y = p
    for _ in range(k % 4):
        x, y = y, (size - 1) - x
    return PixelPoint(x, y)


def augment_rotate(img: np.ndarray, head: PixelPoint, tail: PixelPoint,
                   k: int) -> tuple[np.ndarray, PixelPoint, PixelPoint]:
    """Lossless k*90-degree counter-clockwise rotation of a square image.

    Both labels follow the same rotation, so composing four k=1 calls is
    bit-exact identity.
    """
    h, w = img.shape
    if h != w:
        raise ValueError(f"rotation requires a square image, got {h}x{w}")
    if k not in (0, 1, 2, 3):
        raise ValueError(f"k must be in 0..3, got {k}")
    out = np.rot90(img, k).copy() if k else img
    return out, rotate_point(head, k, w), rotate_point(tail, k, w)
