"""Shi-Tomasi candidates on a fixed grid and least-populated-cell selection."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from .config import VfeConfig
from .pyramid import as_image


def shi_tomasi_score(img):
    """Minimum eigenvalue of the 3x3-summed gradient covariance, per pixel (mean, not sum)."""
    gy, gx = np.gradient(as_image(img))
    a = uniform_filter(gx * gx, 3, mode="nearest")
    b = uniform_filter(gx * gy, 3, mode="nearest")
    c = uniform_filter(gy * gy, 3, mode="nearest")
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def grid_edges(width, height, grid):
    gx, gy = grid
    return (np.linspace(0, width, gx + 1).round().astype(int),
            np.linspace(0, height, gy + 1).round().astype(int))


def cell_of(points, width, height, grid):
    gx, gy = grid
    pts = np.asarray(points, float).reshape(-1, 2)
    cx = np.clip((pts[:, 0] * gx / width).astype(int), 0, gx - 1)
    cy = np.clip((pts[:, 1] * gy / height).astype(int), 0, gy - 1)
    return cy * gx + cx


def detect_candidates(frame, config: VfeConfig = VfeConfig()):
    """Per-cell score maxima: returns ``(points (m, 2), scores (m,))`` with m <= cells."""
    img = as_image(frame)
    h, w = img.shape
    score = shi_tomasi_score(img)
    b = config.border
    score[:b, :] = score[h - b:, :] = 0.0
    score[:, :b] = score[:, w - b:] = 0.0
    xe, ye = grid_edges(w, h, config.grid)
    pts, scores = [], []
    for j in range(len(ye) - 1):
        band = score[ye[j]:ye[j + 1]]
        for i in range(len(xe) - 1):
            cell = band[:, xe[i]:xe[i + 1]]
            if cell.size == 0:
                continue
            k = int(np.argmax(cell))
            s = cell.flat[k]
            if s > config.min_corner_score:
                r, c = divmod(k, cell.shape[1])
                pts.append((xe[i] + c, ye[j] + r))
                scores.append(s)
    return np.array(pts, float).reshape(-1, 2), np.array(scores, float)


def select_features(candidates, scores, existing, needed, width, height,
                    config: VfeConfig = VfeConfig()):
    """Pick up to ``needed`` candidates, emptiest cells first, away from existing features."""
    if needed <= 0 or len(candidates) == 0:
        return np.zeros((0, 2))
    existing = np.asarray(existing, float).reshape(-1, 2)
    counts = np.bincount(cell_of(existing, width, height, config.grid),
                         minlength=config.grid[0] * config.grid[1])
    cells = cell_of(candidates, width, height, config.grid)
    order = np.lexsort((-scores, counts[cells]))
    r2 = config.suppression_radius ** 2
    taken = list(existing)
    out = []
    for k in order:
        p = candidates[k]
        if taken and np.min(((np.asarray(taken) - p) ** 2).sum(1)) < r2:
            continue
        out.append(p)
        taken.append(p)
        if len(out) == needed:
            break
    return np.array(out, float).reshape(-1, 2)


def detect_features(frame, existing, needed, config: VfeConfig = VfeConfig()):
    img = as_image(frame)
    cand, scores = detect_candidates(img, config)
    return select_features(cand, scores, existing, needed, img.shape[1], img.shape[0], config)
