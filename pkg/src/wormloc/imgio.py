"""Grayscale image file I/O.

Supported formats are 8-bit grayscale PNG and binary PGM (P5). Pixel
values map to float intensities in [0, 1] by v/255 on read and by
round(v*255) on write.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataFormatError, InputOutputError


def load_gray(path: str | os.PathLike) -> np.ndarray:
    """Read a PNG or PGM file into a float32 array in [0, 1], shape (H, W)."""
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError as e:
        raise InputOutputError(f"image not found: {path}") from e
    except UnidentifiedImageError as e:
        raise DataFormatError(f"not a readable image: {path}") from e
    except OSError as e:
        raise InputOutputError(f"cannot read image {path}: {e}") from e
    return arr.astype(np.float32) / 255.0


def save_gray(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write a [0, 1] float array as an 8-bit PNG or PGM, chosen by extension."""
    if img.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {img.shape}")
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in (".png", ".pgm"):
        raise DataFormatError(f"unsupported image extension {ext!r} (use .png or .pgm)")
    try:
        Image.fromarray(q, mode="L").save(path)
    except OSError as e:
        raise InputOutputError(f"cannot write image {path}: {e}") from e
