"""Image pyramids by 2x2 averaging.

Level ``l+1`` pixel ``i`` covers level ``l`` pixels ``2i`` and ``2i+1``, so a
point moves between levels as ``x_{l+1} = (x_l - 0.5) / 2``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..framecodec import Frame


def as_image(frame) -> np.ndarray:
    px = frame.pixels if isinstance(frame, Frame) else frame
    return np.asarray(px, dtype=np.float64)


def downsample(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    a = img[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def build_pyramid(frame, levels=3, window=15):
    """Full-resolution image first; raises ConfigError if a level cannot hold the LK window."""
    if levels < 1:
        raise ConfigError("pyramid needs at least one level")
    pyr = [as_image(frame)]
    for _ in range(levels - 1):
        pyr.append(downsample(pyr[-1]))
    small = pyr[-1].shape
    if min(small) < window:
        raise ConfigError(f"pyramid level {levels - 1} is {small[1]}x{small[0]}, "
                          f"smaller than the {window}x{window} window")
    return pyr


def to_level(points, level):
    return (np.asarray(points, float) + 0.5) / 2.0**level - 0.5


def from_level(points, level):
    return (np.asarray(points, float) + 0.5) * 2.0**level - 0.5
