"""Pyramidal Lucas-Kanade tracking, vectorized over features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .config import VfeConfig
from .pyramid import from_level, to_level


@dataclass
class TrackResult:
    points: np.ndarray   # (n, 2) new pixel positions (u, v)
    status: np.ndarray   # (n,) True where tracked
    error: np.ndarray    # (n,) mean absolute patch residual
    iterations: int      # LK iterations summed over features and levels


def _sample(img, u, v):
    return map_coordinates(img, [v.ravel(), u.ravel()], order=1, mode="nearest").reshape(u.shape)


def _gradients(img):
    gy, gx = np.gradient(img)
    return gx, gy


def _inside(points, shape, margin):
    h, w = shape
    return ((points[:, 0] >= margin) & (points[:, 0] <= w - 1 - margin)
            & (points[:, 1] >= margin) & (points[:, 1] <= h - 1 - margin))


def track_features(prev_pyr, cur_pyr, points, config: VfeConfig = VfeConfig(), guess=None):
    """Track ``points`` from ``prev_pyr`` into ``cur_pyr``.

    ``guess`` is an optional predicted displacement per feature at full resolution.
    Lost features keep their old position with ``status`` False.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    half = config.lk_window // 2
    offs = np.arange(-half, half + 1, dtype=float)
    ox, oy = np.meshgrid(offs, offs)
    ox, oy = ox.ravel(), oy.ravel()
    npx = ox.size
    levels = len(prev_pyr)
    status = _inside(pts, prev_pyr[0].shape, 0)
    d = np.zeros((n, 2)) if guess is None else np.asarray(guess, float).reshape(n, 2) / 2.0 ** (levels - 1)
    iterations = 0
    for lvl in range(levels - 1, -1, -1):
        prev, cur = prev_pyr[lvl], cur_pyr[lvl]
        gx, gy = _gradients(prev)
        p = to_level(pts, lvl)
        u = p[:, :1] + ox
        v = p[:, 1:] + oy
        T = _sample(prev, u, v)
        Ix = _sample(gx, u, v)
        Iy = _sample(gy, u, v)
        gxx = (Ix * Ix).sum(1)
        gxy = (Ix * Iy).sum(1)
        gyy = (Iy * Iy).sum(1)
        det = gxx * gyy - gxy * gxy
        min_eig = 0.5 * (gxx + gyy - np.sqrt((gxx - gyy) ** 2 + 4 * gxy * gxy)) / npx
        ok = status & (min_eig > config.lk_min_eigen) & (det > 0)
        status = ok
        active = ok.copy()
        safe_det = np.where(det > 0, det, 1.0)
        for _ in range(config.lk_iterations):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            J = _sample(cur, u[idx] + d[idx, :1], v[idx] + d[idx, 1:])
            e = T[idx] - J
            bx = (e * Ix[idx]).sum(1)
            by = (e * Iy[idx]).sum(1)
            du = (gyy[idx] * bx - gxy[idx] * by) / safe_det[idx]
            dv = (gxx[idx] * by - gxy[idx] * bx) / safe_det[idx]
            d[idx, 0] += du
            d[idx, 1] += dv
            iterations += len(idx)
            active[idx[np.hypot(du, dv) < config.lk_epsilon]] = False
            diverged = idx[np.abs(d[idx]).max(1) > cur.shape[1]]
            status[diverged] = False
            active[diverged] = False
        if lvl > 0:
            d *= 2.0
    new = pts + d
    status &= _inside(new, cur_pyr[0].shape, half)
    # final residual at full resolution
    J = _sample(cur_pyr[0], new[:, :1] + ox, new[:, 1:] + oy)
    T0 = _sample(prev_pyr[0], pts[:, :1] + ox, pts[:, 1:] + oy)
    err = np.abs(T0 - J).mean(1) if n else np.zeros(0)
    status &= err <= config.lk_max_error
    return TrackResult(np.where(status[:, None], new, pts), status, err, iterations)


__all__ = ["TrackResult", "track_features", "from_level"]
