"""Procedural generator of labeled worm-like images.

Each worm is a random smooth open curve stroked with a capsule profile:
the head end is a blunt half-disk, the body tapers to a sharp point at
the tail, and a brightness boost marks the head tip. Both cues (blunter
and brighter head) give a trained localizer signal to discriminate the
two endpoints, mirroring what real single-worm micrographs show.

Worms are rendered bright on a dark background; run the preprocessing
pipeline with ``polarity="bright"`` on this data.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import InputOutputError
from .imaging import PixelPoint
from .imgio import save_gray

CANVAS = 150
#: body intensity sits this far above the background level
BODY_CONTRAST = 0.40
#: margin between the stroked body and the canvas edge, in pixels
EDGE_MARGIN = 4.0


@dataclass
class WormParams:
    body_length: tuple[float, float] = (70.0, 110.0)
    body_width: float = 15.0
    curvature: float = 0.06
    head_brightness_boost: float = 0.25
    noise_std: float = 0.02
    background: float = 0.15

    def validate(self) -> None:
        lo, hi = self.body_length
        if not (0 < lo <= hi):
            raise ValueError(f"bad body_length range {self.body_length}")
        if self.body_width < 3:
            raise ValueError(f"body_width must be >= 3 px, got {self.body_width}")
        if hi + self.body_width + 2 * EDGE_MARGIN > CANVAS:
            raise ValueError("longest worm cannot fit the canvas with margins")
        if self.curvature < 0 or self.noise_std < 0:
            raise ValueError("curvature and noise_std must be >= 0")
        if not (0 <= self.background <= 1):
            raise ValueError(f"background must be in [0, 1], got {self.background}")


def stroke_worm(points: np.ndarray, p: WormParams,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Rasterize a midline polyline (M, 2) of (x, y) points onto the canvas.

    The half-width profile is constant at body_width/2 and ramps linearly
    to zero over the final stretch before the tail (the last point), which
    together with endpoint rounding yields a blunt head cap and a sharp
    tail tip. The head (first point) gets a radial brightness boost.
    Gaussian pixel noise is added when ``rng`` is given.
    """
    pts = np.asarray(points, dtype=np.float64)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    s_start = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s_start[-1]
    r = p.body_width / 2.0
    tail_len = max(2.0 * r, 0.3 * total)

    x0 = max(0, int(np.floor(pts[:, 0].min() - r - 2)))
    x1 = min(CANVAS, int(np.ceil(pts[:, 0].max() + r + 3)))
    y0 = max(0, int(np.floor(pts[:, 1].min() - r - 2)))
    y1 = min(CANVAS, int(np.ceil(pts[:, 1].max() + r + 3)))
    gx, gy = np.meshgrid(np.arange(x0, x1, dtype=np.float64),
                         np.arange(y0, y1, dtype=np.float64))
    px = gx.ravel()
    py = gy.ravel()

    best_d2 = np.full(px.shape, np.inf)
    best_s = np.zeros(px.shape)
    for i in range(len(seg)):
        ax, ay = pts[i]
        vx, vy = seg[i]
        l2 = vx * vx + vy * vy
        if l2 == 0:
            continue
        t = np.clip(((px - ax) * vx + (py - ay) * vy) / l2, 0.0, 1.0)
        dx = px - (ax + t * vx)
        dy = py - (ay + t * vy)
        d2 = dx * dx + dy * dy
        upd = d2 < best_d2
        best_d2[upd] = d2[upd]
        best_s[upd] = s_start[i] + t[upd] * seg_len[i]

    dist = np.sqrt(best_d2)
    half_width = r * np.clip((total - best_s) / tail_len, 0.0, 1.0)
    alpha = np.clip(half_width - dist + 0.5, 0.0, 1.0)

    body = min(1.0, p.background + BODY_CONTRAST)
    d_head = np.hypot(px - pts[0, 0], py - pts[0, 1])
    boost_r = 1.5 * r
    boost = p.head_brightness_boost * np.clip(1.0 - (d_head / boost_r) ** 2, 0.0, 1.0)
    worm_val = np.minimum(body + boost, 1.0)

    img = np.full((CANVAS, CANVAS), p.background, dtype=np.float64)
    patch = p.background * (1.0 - alpha) + worm_val * alpha
    img[y0:y1, x0:x1] = patch.reshape(y1 - y0, x1 - x0)
    if rng is not None and p.noise_std > 0:
        img += rng.normal(0.0, p.noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def gen_worm(rng: np.random.Generator, p: WormParams | None = None,
             ) -> tuple[np.ndarray, PixelPoint, PixelPoint]:
    """Sample one worm image plus exact head/tail labels.

    The midline is a random walk of the tangent angle with per-step turn
    bounded by ``curvature``; the whole curve is translated to a random
    position where it fits with margin. Curves too large to place are
    redrawn, up to 100 attempts.
    """
    p = p or WormParams()
    p.validate()
    margin = p.body_width / 2.0 + EDGE_MARGIN
    for _ in range(100):
        length = rng.uniform(*p.body_length)
        n = int(np.ceil(length))
        theta0 = rng.uniform(0.0, 2.0 * np.pi)
        turns = rng.uniform(-p.curvature, p.curvature, size=n - 1)
        theta = theta0 + np.concatenate([[0.0], np.cumsum(turns)])
        steps = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        steps *= length / n
        pts = np.concatenate([np.zeros((1, 2)), np.cumsum(steps, axis=0)])

        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = hi - lo
        if np.any(span > CANVAS - 2 * margin):
            continue
        off = np.array([
            rng.uniform(margin - lo[0], CANVAS - margin - hi[0]),
            rng.uniform(margin - lo[1], CANVAS - margin - hi[1]),
        ])
        pts = pts + off
        img = stroke_worm(pts, p, rng)
        return img, PixelPoint(*pts[0]), PixelPoint(*pts[-1])
    raise RuntimeError("could not place a worm inside the canvas after 100 attempts")


MANIFEST_HEADER = ["image", "head_x", "head_y", "tail_x", "tail_y"]


def gen_dataset(n: int, seed: int, out_dir: str | os.PathLike,
                p: WormParams | None = None) -> str:
    """Write ``n`` labeled worm PNGs plus a manifest CSV; returns its path.

    Per-image generators are spawned from one seed sequence, so output is
    deterministic for a fixed (n, seed, params) and images could be drawn
    in parallel without changing results.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p = p or WormParams()
    os.makedirs(out_dir, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(n)
    manifest_path = os.path.join(out_dir, "manifest.csv")
    try:
        with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_HEADER)
            for i, child in enumerate(children):
                img, head, tail = gen_worm(np.random.Generator(np.random.PCG64(child)), p)
                name = f"worm_{i:04d}.png"
                save_gray(os.path.join(out_dir, name), img)
                writer.writerow([name, repr(head.x), repr(head.y),
                                 repr(tail.x), repr(tail.y)])
    except OSError as e:
        raise InputOutputError(f"cannot write dataset under {out_dir}: {e}") from e
    return manifest_path
