"""Horizontal template matching on rectified pairs and stereo triangulation."""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import TooFarError
from ..geometry import CameraCalib
from .config import VfeConfig


def stereo_match(left, right, point, config: VfeConfig = VfeConfig()) -> Optional[float]:
    """Disparity (px, subpixel) of ``point`` from left to right, or None.

    The template is centred on the rounded left pixel. Candidate disparities run
    from 0 to ``search_width - template_width``; the best SAD is refined by a
    parabola through its neighbours and must beat the runner-up (outside +-2 px)
    by ``match_ratio``.
    """
    L = np.asarray(left, dtype=np.float64)
    R = np.asarray(right, dtype=np.float64)
    h, w = L.shape
    tw, th = config.template
    hx, hy = tw // 2, th // 2
    u, v = int(round(point[0])), int(round(point[1]))
    if v - hy < 0 or v + hy >= h or u - hx < 0 or u + hx >= w:
        return None
    tmpl = L[v - hy:v + hy + 1, u - hx:u + hx + 1]
    max_d = min(config.search[0] - tw, u - hx)
    strip = R[v - hy:v + hy + 1, u - hx - max_d:u + hx + 1]
    windows = sliding_window_view(strip, (th, tw))[0]  # (max_d+1, th, tw), index = max_d - d
    sad = np.abs(windows - tmpl).sum(axis=(1, 2))[::-1]  # index = disparity
    best = int(np.argmin(sad))
    others = np.concatenate([sad[:max(best - 2, 0)], sad[best + 3:]])
    if len(others) == 0:
        return None
    second = float(others.min())
    if second <= 0 or sad[best] >= config.match_ratio * second:
        return None
    sub = 0.0
    if 0 < best < len(sad) - 1:
        a, b, c = sad[best - 1], sad[best], sad[best + 1]
        den = a - 2 * b + c
        if den > 0:
            sub = 0.5 * (a - c) / den
    return best + sub


def match_cost(config: VfeConfig = VfeConfig()):
    """Absolute-difference operations for one feature at full search width."""
    tw, th = config.template
    return (config.search[0] - tw + 1) * tw * th


def triangulate(pixel, disparity, camera: CameraCalib, min_disparity=0.5):
    """Camera-frame point from a rectified left pixel and its disparity."""
    if not disparity > min_disparity:
        raise TooFarError(f"disparity {disparity} px at or below {min_disparity} px")
    if camera.baseline <= 0:
        raise TooFarError("camera has no stereo baseline")
    z = camera.fx * camera.baseline / disparity
    return np.array([(pixel[0] - camera.cx) * z / camera.fx, (pixel[1] - camera.cy) * z / camera.fy, z])
