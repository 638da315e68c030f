"""Manifest ingestion, preprocessing orchestration, splits, and batching.

The manifest is a UTF-8 CSV with header ``image,head_x,head_y,tail_x,tail_y``
and LF line endings; coordinates are (x, y) pixels in the referenced image
and relative image paths resolve against the manifest's directory.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .errors import DataFormatError, InputOutputError
from .imaging import PixelPoint, PreprocessConfig
from .imgio import load_gray
from .synthgen import MANIFEST_HEADER


@dataclass
class ManifestRow:
    image_path: str  # resolved
    head: PixelPoint
    tail: PixelPoint


@dataclass
class Sample:
    """A preprocessed crop with labels in crop pixel coordinates."""

    image: np.ndarray
    head: PixelPoint
    tail: PixelPoint


@dataclass
class Split:
    train: list[int]
    val: list[int]


@dataclass
class PreprocessResult:
    samples: list[Sample]
    dropped_labels: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)  # (row index, message)


def load_manifest(path: str | os.PathLike) -> list[ManifestRow]:
    """Parse and validate a manifest, preserving row order.

    Raises DataFormatError naming the offending line for malformed rows and
    InputOutputError for missing image files.
    """
    base = os.path.dirname(os.path.abspath(path))
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise InputOutputError(f"cannot open manifest {path}: {e}") from e
    rows = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataFormatError(
                f"{path}: line 1: expected header {','.join(MANIFEST_HEADER)!r}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 5:
                raise DataFormatError(f"{path}: line {lineno}: expected 5 fields, got {len(rec)}")
            try:
                hx, hy, tx, ty = (float(v) for v in rec[1:])
            except ValueError as e:
                raise DataFormatError(f"{path}: line {lineno}: non-numeric coordinate") from e
            if not all(np.isfinite([hx, hy, tx, ty])):
                raise DataFormatError(f"{path}: line {lineno}: non-finite coordinate")
            img_path = rec[0] if os.path.isabs(rec[0]) else os.path.join(base, rec[0])
            if not os.path.isfile(img_path):
                raise InputOutputError(f"{path}: line {lineno}: image not found: {img_path}")
            rows.append(ManifestRow(img_path, PixelPoint(hx, hy), PixelPoint(tx, ty)))
    return rows


def preprocess_row(img: np.ndarray, head: PixelPoint, tail: PixelPoint,
                   cfg: PreprocessConfig) -> Sample | None:
    """Threshold, crop to the largest component, and transfer both labels.

    Returns None when either label lands outside the crop.
    """
    mask = imaging.adaptive_threshold(img, cfg.block, cfg.c, cfg.polarity)
    _, box = imaging.largest_component(mask, cfg.connectivity)
    box = imaging.pad_box(box, cfg.pad_frac, img.shape[1], img.shape[0])
    crop, fwd = imaging.crop_resize(img, box, cfg.out_size)
    new_head = imaging.transfer_label(head, fwd, cfg.out_size)
    new_tail = imaging.transfer_label(tail, fwd, cfg.out_size)
    if new_head is None or new_tail is None:
        return None
    return Sample(crop, new_head, new_tail)


def preprocess_all(rows: list[ManifestRow], cfg: PreprocessConfig | None = None,
                   ) -> PreprocessResult:
    """Run the crop pipeline over manifest rows.

    Rows whose labels fall outside the crop are dropped and counted; rows
    whose image fails to decode or threshold are recorded in ``errors`` and
    skipped, so one bad file does not abort a whole dataset.
    """
    cfg = cfg or PreprocessConfig()
    result = PreprocessResult(samples=[])
    for i, row in enumerate(rows):
        try:
            img = load_gray(row.image_path)
            sample = preprocess_row(img, row.head, row.tail, cfg)
        except (InputOutputError, DataFormatError, ValueError) as e:
            result.errors.append((i, str(e)))
            continue
        if sample is None:
            result.dropped_labels += 1
        else:
            result.samples.append(sample)
    return result


def split_dataset(n_samples: int, ratio: float = 0.7, seed: int = 0) -> Split:
    """Shuffle indices uniformly by seed; the first round(ratio*n) go to train.

    Both sides must end up non-empty, so e.g. ratio=1 is rejected. A
    596-sample set at the default ratio splits 417/179.
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples to split, got {n_samples}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be strictly inside (0, 1), got {ratio}")
    n_train = int(round(ratio * n_samples))
    if n_train == 0 or n_train == n_samples:
        raise ValueError(f"ratio {ratio} leaves an empty side for n={n_samples}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n_samples)
    return Split(train=[int(i) for i in perm[:n_train]],
                 val=[int(i) for i in perm[n_train:]])


@dataclass
class Batch:
    """Immutable snapshot of augmented samples ready for the network.

    ``images`` is (B, 1, H, W) float32; ``labels_px`` is (B, 4) float64
    holding (head_x, head_y, tail_x, tail_y) in crop pixels.
    """

    images: np.ndarray
    labels_px: np.ndarray


def _to_batch(samples: list[Sample]) -> Batch:
    images = np.stack([s.image for s in samples]).astype(np.float32)[:, None]
    labels = np.array([[s.head.x, s.head.y, s.tail.x, s.tail.y] for s in samples])
    return Batch(images, labels)


def batches(samples: list[Sample], indices: list[int], batch: int,
            rng: np.random.Generator, augment: bool):
    """Yield one epoch of batches over ``indices`` in a fresh shuffle.

    With ``augment`` each sample gets a random brightness offset followed by
    a k*90-degree rotation with k uniform over {0, 1, 2, 3}; labels follow
    the rotation. The final short batch is kept.
    """
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    order = rng.permutation(len(indices))
    for start in range(0, len(order), batch):
        chunk = []
        for j in order[start:start + batch]:
            s = samples[indices[j]]
            if augment:
                img = imaging.augment_brightness(s.image, rng)
                k = int(rng.integers(0, 4))
                img, head, tail = imaging.augment_rotate(img, s.head, s.tail, k)
                chunk.append(Sample(img, head, tail))
            else:
                chunk.append(s)
        yield _to_batch(chunk)
