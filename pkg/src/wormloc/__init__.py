"""Worm head/tail keypoint localization toolkit.

Single-worm images go through a classical bounding-box pipeline
(adaptive threshold, largest connected component, crop), a small
fully-convolutional network produces one low-resolution heatmap per
keypoint, and a differentiable soft-argmax readout turns each heatmap
into numeric coordinates. Training, evaluation (PCK), a synthetic data
generator, and a contour-angle baseline are included.
"""

__version__ = "0.1.0"
