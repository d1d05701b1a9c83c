"""Compression sweep: bits per pixel and block size against trajectory error.

The production codec is fixed at 5 kept bits and 4x4 blocks. The sweep uses a
parametrized block-truncation coder that reduces to it at ``(5, 4)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .config import PipelineConfig
from .runner import Pipeline, open_dataset
from ..vfe.frontend import VisionFrontend

TRUNCATIONS = (0, 1, 2, 3, 4)
BLOCKS = (4, 8, 16)


def btc_roundtrip(pixels, keep_bits=5, block=4):
    """Truncate to ``keep_bits``, binarize each block about its midpoint, decode."""
    if not 1 <= keep_bits <= 8 or block < 1:
        raise ConfigError("keep_bits must be in 1..8 and block positive")
    px = np.asarray(pixels, np.uint8)
    h, w = px.shape
    px = np.pad(px, ((0, -h % block), (0, -w % block)), mode="edge")
    shift = 8 - keep_bits
    t = (px >> shift).astype(np.int16)
    H, W = t.shape
    b = t.reshape(H // block, block, W // block, block)
    lo = b.min(axis=(1, 3), keepdims=True)
    hi = b.max(axis=(1, 3), keepdims=True)
    thr = (lo + hi) // 2
    top = np.clip(2 * thr - lo, 0, (1 << keep_bits) - 1)
    out = np.where(b > thr, top, lo).astype(np.uint8) << shift
    return out.reshape(H, W)[:h, :w]


def bits_per_pixel(keep_bits, block):
    return (block * block + 2 * keep_bits) / (block * block)


@dataclass
class SweepRow:
    setting: str
    keep_bits: int
    block: int
    bits_per_pixel: float
    ate_rmse: float
    normalized_error: float


def _run(config, data, codec, max_frames):
    compression = codec is not None
    fe = VisionFrontend(data.rig, config.vfe, stereo=config.stereo, compression=compression,
                        max_age=config.feature_age, seed=config.seed,
                        codec=(lambda px: codec(px).astype(np.float64)) if codec else None)
    pipe = Pipeline(config, data.imu, fe, fe.camera)
    for event in data.frames(stereo=config.stereo, stop=max_frames):
        pipe.process_frame(event)
    return pipe.finish(data.groundtruth).error


def sweep_compression(config: PipelineConfig, dataset="synthetic:rendered",
                      truncations=TRUNCATIONS, blocks=BLOCKS, max_frames=None):
    """One run per (truncation, block) setting plus an uncompressed baseline."""
    data = open_dataset(dataset, config.seed)
    rows = []
    err = _run(config, data, None, max_frames)
    rows.append(SweepRow("raw", 8, 1, 8.0, err["ate_rmse"], err["normalized"]))
    for block in blocks:
        for trunc in truncations:
            keep = 8 - trunc
            err = _run(config, data, partial(btc_roundtrip, keep_bits=keep, block=block), max_frames)
            rows.append(SweepRow(f"btc{keep}x{block}", keep, block, bits_per_pixel(keep, block),
                                 err["ate_rmse"], err["normalized"]))
    return rows


def write_sweep_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["setting", "keep_bits", "block", "bits_per_pixel", "ate_rmse_m",
                      "normalized_error_pct"])
        for r in rows:
            out.writerow([r.setting, r.keep_bits, r.block, f"{r.bits_per_pixel:.4f}",
                          f"{r.ate_rmse:.6f}", f"{r.normalized_error:.4f}"])
    return path
