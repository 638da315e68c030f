"""Differentiable heatmap-to-coordinate readout and the training losses.

A K x K heatmap of raw scores is normalized with a 2-D softmax, then the
predicted coordinate is the probability-weighted average of a fixed
coordinate grid scaled to (-1, 1) (a Frobenius inner product per axis).
The loss is mean squared error on those normalized coordinates plus a
Jensen-Shannon divergence term that pulls each normalized heatmap toward
a Gaussian centered on the ground-truth location.

All operations return analytic gradients; every one of them is covered
by a central finite-difference check in the test suite.
"""

from __future__ import annotations

import numpy as np

#: absolute tolerance on sum(heatmap) == 1 for inputs claiming to be normalized
NORMALIZED_ATOL = 1e-6


def coord_grids(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate matrices X, Y with entries in (-1, 1).

    ``X[i, j] = (2j + 1 - K) / K`` varies along columns, ``Y = X.T`` along
    rows, so cell centers of a K x K grid land strictly inside (-1, 1).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    row = (2.0 * np.arange(k) + 1.0 - k) / k
    x = np.tile(row, (k, 1))
    return x, x.T


def softmax2d(z: np.ndarray) -> np.ndarray:
    """Normalize a heatmap to a probability grid, max-shifted for stability."""
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax2d_backward(zn: np.ndarray, dzn: np.ndarray) -> np.ndarray:
    """Gradient through softmax2d: zn is the forward output, dzn = dL/dzn."""
    return zn * (dzn - np.sum(dzn * zn))


def dsnt(zn: np.ndarray, grids: tuple[np.ndarray, np.ndarray]) -> tuple[float, float]:
    """Read (x, y) off a normalized heatmap as grid-weighted averages.

    The gradient of x w.r.t. zn is the X grid itself (and likewise for y).
    Rejects input whose mass deviates from 1 by more than NORMALIZED_ATOL.
    """
    total = float(zn.sum())
    if abs(total - 1.0) > NORMALIZED_ATOL:
        raise ValueError(f"heatmap is not normalized (sum={total!r})")
    x_grid, y_grid = grids
    return float(np.sum(zn * x_grid)), float(np.sum(zn * y_grid))


def mse_coord_loss(pred: np.ndarray, gt: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over the 4 coordinate components, with gradient.

    ``pred`` and ``gt`` hold (head_x, head_y, tail_x, tail_y) in normalized
    coordinates. Returns (loss, dL/dpred).
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != (4,) or gt.shape != (4,):
        raise ValueError("expected 4-component coordinate vectors")
    diff = pred - gt
    return float(np.mean(diff * diff)), diff / 2.0


def gaussian_target(gt_xy: tuple[float, float], k: int, sigma_hm: float) -> np.ndarray:
    """Normalized isotropic Gaussian rendered on the K x K heatmap grid.

    ``gt_xy`` is a normalized (-1, 1) coordinate; ``sigma_hm`` is the spread
    in heatmap cells.
    """
    if sigma_hm <= 0:
        raise ValueError(f"sigma_hm must be > 0, got {sigma_hm}")
    cx = ((gt_xy[0] + 1.0) * k - 1.0) / 2.0
    cy = ((gt_xy[1] + 1.0) * k - 1.0) / 2.0
    jj = np.arange(k)
    d2 = (jj[None, :] - cx) ** 2 + (jj[:, None] - cy) ** 2
    g = np.exp(-d2 / (2.0 * sigma_hm**2))
    return g / g.sum()


def js_divergence(p: np.ndarray, q: np.ndarray) -> tuple[float, np.ndarray]:
    """Jensen-Shannon divergence (natural log) with gradient w.r.t. p.

    Both inputs must be normalized with non-negative entries; 0*log(0) is
    taken as 0. The value lies in [0, ln 2]. The gradient at exactly-zero
    p entries is clamped to 0 (softmax outputs are strictly positive, so
    the clamp never fires on the training path).
    """
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = np.where(p > 0, p * np.log(np.where(p > 0, p / m, 1.0)), 0.0)
        kl_q = np.where(q > 0, q * np.log(np.where(q > 0, q / m, 1.0)), 0.0)
        grad = np.where(p > 0, 0.5 * np.log(np.where(p > 0, p / m, 1.0)), 0.0)
    return float(0.5 * kl_p.sum() + 0.5 * kl_q.sum()), grad


def total_loss(z_head: np.ndarray, z_tail: np.ndarray, gt: np.ndarray,
               lambda_js: float = 1.0, sigma_hm: float = 1.0,
               grids: tuple[np.ndarray, np.ndarray] | None = None,
               ) -> tuple[float, np.ndarray, np.ndarray]:
    """Full per-sample loss on raw heatmaps, with gradients w.r.t. both.

    L = MSE(coords(z_head, z_tail), gt)
        + lambda_js * 0.5 * [JS(zn_head, G_head) + JS(zn_tail, G_tail)]

    where zn = softmax2d(z), coords chains softmax -> dsnt, gt holds
    (head_x, head_y, tail_x, tail_y) normalized, and G is the Gaussian
    target around the corresponding ground-truth point.

    Returns (loss, dL/dz_head, dL/dz_tail).
    """
    if lambda_js < 0:
        raise ValueError(f"lambda_js must be >= 0, got {lambda_js}")
    k = z_head.shape[0]
    if grids is None:
        grids = coord_grids(k)
    x_grid, y_grid = grids
    gt = np.asarray(gt, dtype=np.float64)

    zn_h = softmax2d(z_head)
    zn_t = softmax2d(z_tail)
    pred = np.array([np.sum(zn_h * x_grid), np.sum(zn_h * y_grid),
                     np.sum(zn_t * x_grid), np.sum(zn_t * y_grid)])
    loss, dpred = mse_coord_loss(pred, gt)

    dzn_h = dpred[0] * x_grid + dpred[1] * y_grid
    dzn_t = dpred[2] * x_grid + dpred[3] * y_grid

    if lambda_js > 0:
        g_h = gaussian_target((gt[0], gt[1]), k, sigma_hm)
        g_t = gaussian_target((gt[2], gt[3]), k, sigma_hm)
        js_h, djs_h = js_divergence(zn_h, g_h)
        js_t, djs_t = js_divergence(zn_t, g_t)
        loss += lambda_js * 0.5 * (js_h + js_t)
        dzn_h = dzn_h + lambda_js * 0.5 * djs_h
        dzn_t = dzn_t + lambda_js * 0.5 * djs_t

    return loss, softmax2d_backward(zn_h, dzn_h), softmax2d_backward(zn_t, dzn_t)
