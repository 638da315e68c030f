"""Adam training loop, metrics logging, and binary checkpoints.

One run is fully deterministic given (seed, config, data): parameter
init, epoch shuffles, and augmentation draws all derive from the config
seed, and evaluation runs without augmentation. Per epoch the loop logs
``epoch,train_loss,val_loss,val_pck15`` and tracks the best parameters
by validation PCK@15.

Checkpoint format (little-endian throughout): magic ``WPKT``, u32
version, architecture ints, training-config scalars, epoch, a 32-byte
digest of the data rng state, then per-block shape headers with raw
float32 kernel/bias payloads.
"""

from __future__ import annotations

import copy
import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import dsnt, nn
from .dataset import Batch, Sample, Split, batches
from .errors import (BadMagicError, CorruptFileError, InputOutputError,
                     NumericError, UnknownVersionError)

MAGIC = b"WPKT"
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 60
    batch: int = 64
    lambda_js: float = 1.0
    sigma_hm: float = 1.0
    seed: int = 0
    runs: int = 10

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch < 1 or self.runs < 1:
            raise ValueError("epochs, batch and runs must be >= 1")
        if self.lambda_js < 0 or self.sigma_hm <= 0:
            raise ValueError("lambda_js must be >= 0 and sigma_hm > 0")


@dataclass
class AdamState:
    """First/second moment accumulators mirroring NetworkParams.blocks()."""

    moments: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    t: int = 0

    @classmethod
    def for_params(cls, params: nn.NetworkParams) -> "AdamState":
        moments = [(np.zeros_like(b.weight), np.zeros_like(b.weight),
                    np.zeros_like(b.bias), np.zeros_like(b.bias))
                   for b in params.blocks()]
        return cls(moments)


def adam_step(params: nn.NetworkParams, grads: nn.ParamGrads,
              state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    blocks = params.blocks()
    if len(blocks) != len(grads.blocks) or len(blocks) != len(state.moments):
        raise ValueError("params, grads and state have mismatched block counts")
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for blk, (dw, db), (mw, vw, mb, vb) in zip(blocks, grads.blocks, state.moments):
        if dw.shape != blk.weight.shape or db.shape != blk.bias.shape:
            raise ValueError("gradient shape does not match parameter shape")
        for theta, g, m, v in ((blk.weight, dw, mw, vw), (blk.bias, db, mb, vb)):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            theta -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def labels_to_norm(labels_px: np.ndarray, size: int) -> np.ndarray:
    """Pixel coordinates to the (-1, 1) convention of the coordinate grids."""
    return (2.0 * np.asarray(labels_px, dtype=np.float64) + 1.0) / size - 1.0


def batch_loss_and_grads(params: nn.NetworkParams, batch: Batch, cfg: TrainConfig,
                         grids) -> tuple[float, nn.ParamGrads]:
    """Mean per-sample loss over a batch plus parameter gradients.

    Heatmaps are promoted to float64 for the loss and its heatmap
    gradients; the conv backward then runs in the parameter precision.
    """
    zh, zt, cache = nn.forward(params, batch.images, want_cache=True)
    n = zh.shape[0]
    gt = labels_to_norm(batch.labels_px, batch.images.shape[-1])
    dzh = np.zeros(zh.shape, dtype=np.float32)
    dzt = np.zeros(zt.shape, dtype=np.float32)
    loss_sum = 0.0
    for i in range(n):
        li, dh, dt = dsnt.total_loss(zh[i].astype(np.float64), zt[i].astype(np.float64),
                                     gt[i], cfg.lambda_js, cfg.sigma_hm, grids)
        loss_sum += li
        dzh[i] = dh / n
        dzt[i] = dt / n
    return loss_sum / n, nn.backward(params, cache, dzh, dzt)


def predict_coords(params: nn.NetworkParams, images: np.ndarray,
                   chunk: int = 64) -> np.ndarray:
    """Normalized (head_x, head_y, tail_x, tail_y) per image, shape (N, 4)."""
    grids = dsnt.coord_grids(params.cfg.heatmap_size)
    out = np.empty((images.shape[0], 4), dtype=np.float64)
    for start in range(0, images.shape[0], chunk):
        zh, zt = nn.forward(params, images[start:start + chunk])
        for i in range(zh.shape[0]):
            hx, hy = dsnt.dsnt(dsnt.softmax2d(zh[i].astype(np.float64)), grids)
            tx, ty = dsnt.dsnt(dsnt.softmax2d(zt[i].astype(np.float64)), grids)
            out[start + i] = (hx, hy, tx, ty)
    return out


def _eval_split(params, samples, idx, cfg, grids, pck_px=15.0):
    """Unaugmented loss and PCK@15 (head/tail averaged) over a sample subset."""
    size = samples[0].image.shape[0]
    images = np.stack([samples[i].image for i in idx]).astype(np.float32)[:, None]
    labels = np.array([[samples[i].head.x, samples[i].head.y,
                        samples[i].tail.x, samples[i].tail.y] for i in idx])
    gt = labels_to_norm(labels, size)
    loss_sum = 0.0
    hits = 0
    for start in range(0, len(idx), cfg.batch):
        zh, zt = nn.forward(params, images[start:start + cfg.batch])
        for i in range(zh.shape[0]):
            z64h, z64t = zh[i].astype(np.float64), zt[i].astype(np.float64)
            li, _, _ = dsnt.total_loss(z64h, z64t, gt[start + i],
                                       cfg.lambda_js, cfg.sigma_hm, grids)
            loss_sum += li
            x_grid, y_grid = grids
            znh, znt = dsnt.softmax2d(z64h), dsnt.softmax2d(z64t)
            pred = np.array([np.sum(znh * x_grid), np.sum(znh * y_grid),
                             np.sum(znt * x_grid), np.sum(znt * y_grid)])
            pred_px = ((pred + 1.0) * size - 1.0) / 2.0
            gt_px = labels[start + i]
            hits += int(np.hypot(*(pred_px[:2] - gt_px[:2])) <= pck_px)
            hits += int(np.hypot(*(pred_px[2:] - gt_px[2:])) <= pck_px)
    return loss_sum / len(idx), hits / (2 * len(idx))


@dataclass
class Checkpoint:
    version: int
    arch: nn.ArchConfig
    params: nn.NetworkParams
    train_cfg: TrainConfig
    epoch: int
    rng_digest: bytes = b"\x00" * 32


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint
    metrics: list[tuple[int, float, float, float]] = field(default_factory=list)


METRICS_HEADER = "epoch,train_loss,val_loss,val_pck15"


def write_metrics(rows, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(METRICS_HEADER + "\n")
            for epoch, train_loss, val_loss, val_pck in rows:
                fh.write(f"{epoch},{train_loss:.8f},{val_loss:.8f},{val_pck:.6f}\n")
    except OSError as e:
        raise InputOutputError(f"cannot write metrics {path}: {e}") from e


def train_run(samples: list[Sample], split: Split, cfg: TrainConfig,
              arch: nn.ArchConfig | None = None) -> TrainResult:
    """Train one model; returns final and best-by-val-PCK@15 checkpoints.

    Raises NumericError naming the epoch and batch if the loss goes
    non-finite.
    """
    cfg.validate()
    if not split.train or not split.val:
        raise ValueError("both train and val index lists must be non-empty")
    arch = arch or nn.ArchConfig(input_size=samples[0].image.shape[0])
    init_ss, data_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    params = nn.init_params(arch, np.random.Generator(np.random.PCG64(init_ss)))
    data_rng = np.random.Generator(np.random.PCG64(data_ss))
    state = AdamState.for_params(params)
    grids = dsnt.coord_grids(arch.heatmap_size)

    metrics = []
    best_pck = -1.0
    best_params = None
    best_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        for b, batch in enumerate(batches(samples, split.train, cfg.batch,
                                          data_rng, augment=True)):
            loss, grads = batch_loss_and_grads(params, batch, cfg, grids)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            adam_step(params, grads, state, cfg)
            loss_sum += loss * batch.images.shape[0]
        train_loss = loss_sum / len(split.train)
        val_loss, val_pck = _eval_split(params, samples, split.val, cfg, grids)
        metrics.append((epoch, train_loss, val_loss, val_pck))
        if val_pck > best_pck:
            best_pck = val_pck
            best_params = copy.deepcopy(params)
            best_epoch = epoch

    digest = hashlib.sha256(repr(data_rng.bit_generator.state).encode()).digest()
    final = Checkpoint(FORMAT_VERSION, arch, params, cfg, cfg.epochs, digest)
    best = Checkpoint(FORMAT_VERSION, arch, best_params, cfg, best_epoch, digest)
    return TrainResult(final, best, metrics)


def _pack_block(blk: nn.ConvBlock) -> bytes:
    o, c, kh, kw = blk.weight.shape
    return (struct.pack("<IIII", o, c, kh, kw)
            + np.ascontiguousarray(blk.weight, dtype="<f4").tobytes()
            + np.ascontiguousarray(blk.bias, dtype="<f4").tobytes())


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    """Serialize; save -> load -> save is byte-identical."""
    arch, cfg = ckpt.arch, ckpt.train_cfg
    parts = [MAGIC, struct.pack("<I", ckpt.version)]
    parts.append(struct.pack("<III", arch.input_size, arch.in_channels,
                             len(arch.trunk_channels)))
    parts.append(struct.pack(f"<{len(arch.trunk_channels)}I", *arch.trunk_channels))
    parts.append(struct.pack("<I", arch.heatmap_size))
    parts.append(struct.pack("<6d", cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                             cfg.lambda_js, cfg.sigma_hm))
    parts.append(struct.pack("<IIIq", cfg.epochs, cfg.batch, cfg.runs, cfg.seed))
    parts.append(struct.pack("<I", ckpt.epoch))
    if len(ckpt.rng_digest) != 32:
        raise ValueError("rng digest must be 32 bytes")
    parts.append(ckpt.rng_digest)
    blocks = ckpt.params.blocks()
    parts.append(struct.pack("<I", len(blocks)))
    parts.extend(_pack_block(b) for b in blocks)
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as e:
        raise InputOutputError(f"cannot write checkpoint {path}: {e}") from e


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CorruptFileError(f"{self.path}: truncated checkpoint")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise InputOutputError(f"cannot read checkpoint {path}: {e}") from e
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise UnknownVersionError(f"{path}: unsupported checkpoint version {version}")
    input_size, in_channels, n_trunk = r.unpack("<III")
    channels = r.unpack(f"<{n_trunk}I")
    (k_stored,) = r.unpack("<I")
    arch = nn.ArchConfig(input_size, tuple(int(c) for c in channels), in_channels)
    if arch.heatmap_size != k_stored:
        raise CorruptFileError(f"{path}: stored heatmap size {k_stored} "
                               f"inconsistent with architecture ({arch.heatmap_size})")
    lr, beta1, beta2, eps, lambda_js, sigma_hm = r.unpack("<6d")
    epochs, batch, runs, seed = r.unpack("<IIIq")
    cfg = TrainConfig(lr, beta1, beta2, eps, epochs, batch, lambda_js, sigma_hm,
                      seed, runs)
    (epoch,) = r.unpack("<I")
    digest = r.take(32)
    (n_blocks,) = r.unpack("<I")
    if n_blocks != n_trunk + 2:
        raise CorruptFileError(f"{path}: expected {n_trunk + 2} blocks, found {n_blocks}")
    blocks = []
    for _ in range(n_blocks):
        o, c, kh, kw = r.unpack("<IIII")
        if (kh, kw) != (3, 3):
            raise CorruptFileError(f"{path}: unexpected kernel size {kh}x{kw}")
        w = np.frombuffer(r.take(o * c * kh * kw * 4), dtype="<f4").reshape(o, c, kh, kw)
        b = np.frombuffer(r.take(o * 4), dtype="<f4")
        blocks.append(nn.ConvBlock(w.copy(), b.copy()))
    if r.off != len(data):
        raise CorruptFileError(f"{path}: {len(data) - r.off} trailing bytes")
    params = nn.NetworkParams(arch, blocks[:-2], blocks[-2], blocks[-1])
    try:
        params.validate()
    except ValueError as e:
        raise CorruptFileError(f"{path}: {e}") from e
    return Checkpoint(version, arch, params, cfg, epoch, digest)
