"""PCK metrics, coordinate de-normalization, and multi-run reporting.

Distances are Euclidean in crop pixels (150 x 150 by default). A report
covers head, tail, and their per-run average at each threshold, with
mean and sample standard deviation across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Sample
from .train import Checkpoint, predict_coords

KEYPOINT_ROWS = ("head", "tail", "average")
DEFAULT_THRESHOLDS = (7.0, 15.0, 30.0)


def norm_to_pixels(c: float, size: int = 150) -> float:
    """Map a (-1, 1) normalized coordinate to pixels: ((c+1)*size - 1) / 2.

    Exact inverse of the coordinate-grid formula on grid points.
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    return ((c + 1.0) * size - 1.0) / 2.0


def pck(preds: np.ndarray, gts: np.ndarray, p: float) -> tuple[float, float]:
    """Fraction of predictions within ``p`` pixels, per keypoint.

    ``preds`` and ``gts`` are (N, 4) arrays of (head_x, head_y, tail_x,
    tail_y) pixel coordinates; returns (head_fraction, tail_fraction).
    """
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape or preds.ndim != 2 or preds.shape[1] != 4:
        raise ValueError(f"prediction/ground-truth shapes differ or are not (N, 4): "
                         f"{preds.shape} vs {gts.shape}")
    if preds.shape[0] < 1:
        raise ValueError("need at least one sample")
    d_head = np.hypot(preds[:, 0] - gts[:, 0], preds[:, 1] - gts[:, 1])
    d_tail = np.hypot(preds[:, 2] - gts[:, 2], preds[:, 3] - gts[:, 3])
    return float(np.mean(d_head <= p)), float(np.mean(d_tail <= p))


@dataclass
class PckTable:
    """Single-run accuracy percentages, rows (head, tail, average)."""

    thresholds: tuple[float, ...]
    acc: np.ndarray  # (3, len(thresholds)) in percent


@dataclass
class PckReport:
    """Mean and sample std of accuracy percentages across runs."""

    thresholds: tuple[float, ...]
    mean: np.ndarray  # (3, T)
    std: np.ndarray   # (3, T)
    n_runs: int


def evaluate(ckpt: Checkpoint, samples: list[Sample],
             thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS) -> PckTable:
    """Forward + softmax + coordinate readout on every sample, then PCK."""
    if not samples:
        raise ValueError("no samples to evaluate")
    size = samples[0].image.shape[0]
    if size != ckpt.arch.input_size:
        raise ValueError(f"checkpoint expects {ckpt.arch.input_size}px inputs, "
                         f"samples are {size}px")
    images = np.stack([s.image for s in samples]).astype(np.float32)[:, None]
    gts = np.array([[s.head.x, s.head.y, s.tail.x, s.tail.y] for s in samples])
    preds = norm_to_pixels(predict_coords(ckpt.params, images), size)
    acc = np.zeros((3, len(thresholds)))
    for j, p in enumerate(thresholds):
        head, tail = pck(preds, gts, p)
        acc[:, j] = (100.0 * head, 100.0 * tail, 100.0 * (head + tail) / 2.0)
    return PckTable(tuple(thresholds), acc)


def aggregate_runs(tables: list[PckTable]) -> PckReport:
    """Mean +/- sample std (n-1 denominator; 0 when n=1) per cell."""
    if not tables:
        raise ValueError("need at least one table")
    thresholds = tables[0].thresholds
    for t in tables[1:]:
        if t.thresholds != thresholds or t.acc.shape != tables[0].acc.shape:
            raise ValueError("tables have mismatched shapes")
    stack = np.stack([t.acc for t in tables])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1) if len(tables) > 1 else np.zeros_like(mean)
    return PckReport(thresholds, mean, std, len(tables))


def report_rows(report: PckReport) -> list[tuple[str, float, float, float]]:
    """Flatten to (keypoint, threshold, mean, std) in canonical row order."""
    rows = []
    for i, name in enumerate(KEYPOINT_ROWS):
        for j, p in enumerate(report.thresholds):
            rows.append((name, p, float(report.mean[i, j]), float(report.std[i, j])))
    return rows


def format_report(report: PckReport) -> str:
    """Aligned text table, one line per keypoint/threshold pair."""
    lines = []
    for name, p, mean, std in report_rows(report):
        label = f"{name.capitalize()} (PCK @ {p:g})"
        lines.append(f"{label:<22s} {mean:6.2f} ± {std:.2f}")
    return "\n".join(lines)


def report_csv(report: PckReport) -> str:
    lines = ["keypoint,threshold,mean,std"]
    for name, p, mean, std in report_rows(report):
        lines.append(f"{name},{p:g},{mean:.4f},{std:.4f}")
    return "\n".join(lines) + "\n"
