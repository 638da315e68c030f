"""Classical contour-angle head/tail proposer, used as a comparison method.

The boundary of a single-component mask is traced (Moore neighborhood,
counter-clockwise as displayed, starting from the topmost-leftmost
boundary pixel). At every contour point the interior angle between the
points ``k`` steps away along the contour in either direction is
computed; among convex corners sharper than ``theta_max`` the sharpest
is proposed as the tail and the second sharpest (at contour distance
greater than ``k``) as the head.

No brightness cue is used, so the method shares the known failure mode
of angle-threshold trackers: a tight body bend or a ragged edge can
out-sharpen the real endpoints.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .imaging import PixelPoint

# Moore neighborhood in (dy, dx), clockwise on screen starting north.
_NEIGHBORS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_NEIGHBOR_INDEX = {d: i for i, d in enumerate(_NEIGHBORS)}


def _next_boundary(mask: np.ndarray, cur, prev):
    """First foreground Moore neighbor clockwise after ``prev``, plus the
    last background cell checked before it (the new backtrack)."""
    h, w = mask.shape
    di = _NEIGHBOR_INDEX[(prev[0] - cur[0], prev[1] - cur[1])]
    last_bg = prev
    for step in range(1, 9):
        dy, dx = _NEIGHBORS[(di + step) % 8]
        cand = (cur[0] + dy, cur[1] + dx)
        if 0 <= cand[0] < h and 0 <= cand[1] < w and mask[cand]:
            return cand, last_bg
        last_bg = cand
    return None, None


def trace_contour(mask: np.ndarray) -> list[PixelPoint]:
    """Ordered boundary pixels of a single 8-connected component.

    The loop is closed (last point is 8-adjacent to the first), oriented
    counter-clockwise on screen, and starts at the topmost-leftmost
    boundary pixel. Raises for empty or multi-component masks and for
    degenerate blobs whose boundary has fewer than 4 points.
    """
    mask = np.asarray(mask, dtype=bool)
    _, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        raise ValueError("mask has no foreground pixels")
    if n > 1:
        raise ValueError(f"mask has {n} components, expected exactly one")
    ys, xs = np.nonzero(mask)
    sy = int(ys.min())
    sx = int(xs[ys == sy].min())
    start = (sy, sx)

    # Trace clockwise on screen, then reverse below.
    contour = [start]
    cur, prev = start, (sy, sx - 1)
    first = None
    while True:
        nxt, last_bg = _next_boundary(mask, cur, prev)
        if nxt is None:
            break  # isolated pixel
        if first is None:
            first = (cur, nxt)
        elif (cur, nxt) == first:
            contour.pop()  # drop the duplicated start at the seam
            break
        contour.append(nxt)
        prev, cur = last_bg, nxt

    if len(contour) < 4:
        raise ValueError(f"degenerate component: boundary has {len(contour)} "
                         "points, need at least 4")
    contour = [contour[0]] + contour[:0:-1]
    return [PixelPoint(float(x), float(y)) for y, x in contour]


def contour_angles(contour: list[PixelPoint], k: int) -> tuple[np.ndarray, np.ndarray]:
    """Interior angle and convexity flag at every contour point.

    The angle at point i is measured between the vectors to the points
    k steps backward and forward along the (circular) contour. Convexity
    follows the counter-clockwise(on-screen) orientation: the turn's
    cross product is negative at convex corners in image coordinates.
    """
    pts = np.asarray(contour, dtype=np.float64)
    n = len(pts)
    if n <= 2 * k:
        raise ValueError(f"contour length {n} too short for arc offset {k}")
    back = np.roll(pts, k, axis=0)
    fwd = np.roll(pts, -k, axis=0)
    u = back - pts
    v = fwd - pts
    nu = np.hypot(u[:, 0], u[:, 1])
    nv = np.hypot(v[:, 0], v[:, 1])
    ok = (nu > 0) & (nv > 0)
    cosang = np.sum(u * v, axis=1) / np.where(ok, nu * nv, 1.0)
    angle = np.arccos(np.clip(cosang, -1.0, 1.0))
    angle[~ok] = np.pi
    cross = (-u[:, 0]) * v[:, 1] - (-u[:, 1]) * v[:, 0]
    convex = ok & (cross < 0)
    return angle, convex


def endpoint_proposals(contour: list[PixelPoint], k: int = 10,
                       theta_max: float = 2.0) -> tuple[PixelPoint, PixelPoint] | None:
    """Propose (tail, head) from contour corner sharpness.

    The sharpest qualifying convex corner is the tail, the second sharpest
    at circular contour distance > k is the head. Returns None when fewer
    than two corners qualify.
    """
    angle, convex = contour_angles(contour, k)
    qualify = convex & (angle < theta_max)
    if not qualify.any():
        return None
    n = len(contour)
    masked = np.where(qualify, angle, np.inf)
    tail_i = int(np.argmin(masked))
    dist = np.abs(np.arange(n) - tail_i)
    dist = np.minimum(dist, n - dist)
    masked[dist <= k] = np.inf
    head_i = int(np.argmin(masked))
    if not np.isfinite(masked[head_i]):
        return None
    return contour[tail_i], contour[head_i]
