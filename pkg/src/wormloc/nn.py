"""Minimal differentiable layer set and the fully-convolutional backbone.

The network is a shared trunk of [conv3x3 -> relu -> maxpool2(ceil)]
stages followed by two single-channel 3x3 conv heads, one per keypoint,
so every layer except the final one is shared between head and tail.
With the default 150x150 input and five stages the output heatmaps are
5x5 (150 -> 75 -> 38 -> 19 -> 10 -> 5 under ceiling-mode pooling).

Layers are plain functions on float arrays of shape (N, C, H, W) with
hand-written backward passes; convolution is im2col + GEMM. All
gradients are validated against central finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class ArchConfig:
    """Backbone shape: input resolution and per-stage channel counts."""

    input_size: int = 150
    trunk_channels: tuple[int, ...] = (8, 16, 32, 32, 32)
    in_channels: int = 1

    def __post_init__(self):
        if self.input_size < 1 or self.in_channels < 1 or not self.trunk_channels:
            raise ValueError(f"invalid architecture config: {self}")

    @property
    def heatmap_size(self) -> int:
        size = self.input_size
        for _ in self.trunk_channels:
            size = math.ceil(size / 2)
        return size


@dataclass
class ConvBlock:
    weight: np.ndarray  # (out_ch, in_ch, 3, 3)
    bias: np.ndarray    # (out_ch,)


@dataclass
class NetworkParams:
    """Ordered trunk blocks plus the two per-keypoint final blocks."""

    cfg: ArchConfig
    trunk: list[ConvBlock]
    head: ConvBlock
    tail: ConvBlock

    def blocks(self) -> list[ConvBlock]:
        """Canonical block order used by the optimizer and checkpoints."""
        return [*self.trunk, self.head, self.tail]

    def validate(self) -> None:
        chain = [self.cfg.in_channels, *self.cfg.trunk_channels]
        if len(self.trunk) != len(self.cfg.trunk_channels):
            raise ValueError("trunk depth does not match config")
        for blk, cin, cout in zip(self.trunk, chain[:-1], chain[1:]):
            if blk.weight.shape != (cout, cin, 3, 3) or blk.bias.shape != (cout,):
                raise ValueError(f"trunk block shape {blk.weight.shape} does not match config")
        for blk in (self.head, self.tail):
            if blk.weight.shape != (1, chain[-1], 3, 3) or blk.bias.shape != (1,):
                raise ValueError(f"final block shape {blk.weight.shape} does not match config")


def init_params(cfg: ArchConfig, rng: np.random.Generator,
                dtype=np.float32) -> NetworkParams:
    """He-initialized kernels (std = sqrt(2/fan_in)), zero biases."""
    def block(cin, cout):
        std = math.sqrt(2.0 / (cin * 9))
        w = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(dtype)
        return ConvBlock(w, np.zeros(cout, dtype=dtype))

    chain = [cfg.in_channels, *cfg.trunk_channels]
    trunk = [block(cin, cout) for cin, cout in zip(chain[:-1], chain[1:])]
    return NetworkParams(cfg, trunk, block(chain[-1], 1), block(chain[-1], 1))


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected 3-D or 4-D tensor, got shape {x.shape}")


def _im2col(x: np.ndarray) -> np.ndarray:
    """Unfold zero-padded 3x3 patches into rows: (N*H*W, C*9)."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, w, 3, 3)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 cross-correlation, stride 1, zero same-padding."""
    y, _ = conv2d_forward(x, weight, bias)
    return y


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Forward pass returning (output, cache) for the backward pass."""
    x4, squeeze = _as_batch(x)
    n, c, h, w = x4.shape
    o, ci, kh, kw = weight.shape
    if (kh, kw) != (3, 3) or ci != c or bias.shape != (o,):
        raise ValueError(f"kernel {weight.shape}/bias {bias.shape} do not match input {x4.shape}")
    cols = _im2col(x4)
    y = cols @ weight.reshape(o, -1).T
    y += bias
    y = y.reshape(n, h, w, o).transpose(0, 3, 1, 2)
    cache = (x4.shape, cols, weight)
    return (y[0] if squeeze else y), cache


def conv2d_backward(dout: np.ndarray, cache):
    """Gradients (dx, dweight, dbias) given upstream dL/doutput."""
    x_shape, cols, weight = cache
    n, c, h, w = x_shape
    d4, squeeze = _as_batch(dout)
    o = weight.shape[0]
    dflat = d4.transpose(0, 2, 3, 1).reshape(-1, o)
    db = dflat.sum(axis=0)
    dw = (dflat.T @ cols).reshape(weight.shape)
    # dx is the same-padded correlation of dout with the spatially flipped,
    # channel-transposed kernels.
    wflip = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)
    dx = (_im2col(d4) @ wflip.T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    return (dx[0] if squeeze else dx), dw, db


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Backward given the forward *output* y (y > 0 iff x > 0)."""
    return dout * (y > 0)


def maxpool2_ceil(x: np.ndarray) -> np.ndarray:
    y, _ = maxpool2_ceil_forward(x)
    return y


def maxpool2_ceil_forward(x: np.ndarray):
    """2x2/stride-2 max pooling in ceiling mode.

    Odd trailing rows/columns form partial windows (padded with -inf, so
    they never win against real values); output size is ceil(n/2). Ties
    within a window route the gradient to the first position in row-major
    window order.
    """
    x4, squeeze = _as_batch(x)
    n, c, h, w = x4.shape
    oh, ow = -(-h // 2), -(-w // 2)
    ph, pw = 2 * oh - h, 2 * ow - w
    if ph or pw:
        x4 = np.pad(x4, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=-np.inf)
    win = x4.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    cache = (idx, (h, w), squeeze)
    return (y[0] if squeeze else y), cache


def maxpool2_ceil_backward(dout: np.ndarray, cache) -> np.ndarray:
    idx, (h, w), squeeze = cache
    d4, _ = _as_batch(dout)
    n, c, oh, ow = d4.shape
    dwin = np.zeros((n, c, oh, ow, 4), dtype=d4.dtype)
    np.put_along_axis(dwin, idx[..., None], d4[..., None], axis=-1)
    dx = dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5) \
             .reshape(n, c, 2 * oh, 2 * ow)[:, :, :h, :w]
    return dx[0] if squeeze else dx


def forward(params: NetworkParams, x: np.ndarray, want_cache: bool = False):
    """Run the backbone on one image (H, W) or a batch (N, C, H, W).

    Returns (z_head, z_tail) heatmaps of raw scores, shaped (K, K) for a
    single image and (N, K, K) for a batch; with ``want_cache`` a third
    element carries everything ``backward`` needs.
    """
    single = x.ndim == 2
    x4 = x[None, None] if single else x
    feat = x4
    stages = []
    for blk in params.trunk:
        z, conv_cache = conv2d_forward(feat, blk.weight, blk.bias)
        a = relu(z)
        feat, pool_cache = maxpool2_ceil_forward(a)
        stages.append((conv_cache, a, pool_cache))
    zh, head_cache = conv2d_forward(feat, params.head.weight, params.head.bias)
    zt, tail_cache = conv2d_forward(feat, params.tail.weight, params.tail.bias)
    zh, zt = zh[:, 0], zt[:, 0]
    if single:
        zh, zt = zh[0], zt[0]
    if not want_cache:
        return zh, zt
    return zh, zt, (stages, head_cache, tail_cache, single)


@dataclass
class ParamGrads:
    """Per-block gradients in the same order as NetworkParams.blocks()."""

    blocks: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def backward(params: NetworkParams, cache, dz_head: np.ndarray,
             dz_tail: np.ndarray) -> ParamGrads:
    """Backpropagate heatmap gradients to every parameter block."""
    stages, head_cache, tail_cache, single = cache
    if single:
        dz_head, dz_tail = dz_head[None], dz_tail[None]
    dfeat_h, dwh, dbh = conv2d_backward(dz_head[:, None], head_cache)
    dfeat_t, dwt, dbt = conv2d_backward(dz_tail[:, None], tail_cache)
    d = dfeat_h + dfeat_t
    trunk_grads = []
    for conv_cache, a, pool_cache in reversed(stages):
        d = maxpool2_ceil_backward(d, pool_cache)
        d = relu_backward(d, a)
        d, dw, db = conv2d_backward(d, conv_cache)
        trunk_grads.append((dw, db))
    trunk_grads.reverse()
    return ParamGrads([*trunk_grads, (dwh, dbh), (dwt, dbt)])
