"""Gyro-aided geometric verification.

Correspondences follow ``x_cur ~ dR @ x_prev + t``: ``dR`` maps previous-camera
coordinates into the current camera and comes from gyroscope integration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError


@dataclass
class RansacResult:
    inliers: np.ndarray     # bool mask
    model: np.ndarray       # translation direction (mono, zero for pure rotation) or translation (stereo)
    iterations: int
    rotation_only: bool = False


def _unit(x):
    x = np.asarray(x, float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def epipolar_residuals(t, a, c):
    """Angle between each current bearing ``c`` and the plane spanned by ``t`` and ``a = dR x_prev``."""
    n = np.cross(t, a)
    nn = np.linalg.norm(n, axis=1)
    along = nn < 1e-12
    r = np.abs((c * n).sum(1)) / np.where(along, 1.0, nn)
    # a parallel to t: the plane is undefined, use the angle to a itself
    r[along] = np.linalg.norm(np.cross(c[along], a[along]), axis=1)
    return np.arcsin(np.clip(r, 0.0, 1.0))


def mono_ransac_2pt(prev_bearings, cur_bearings, dR, threshold=2e-3, iterations=100, seed=0):
    """Translation-direction RANSAC with known rotation; ``threshold`` in radians."""
    p = _unit(np.asarray(prev_bearings, float).reshape(-1, 3))
    c = _unit(np.asarray(cur_bearings, float).reshape(-1, 3))
    n = len(p)
    if n < 2:
        raise InsufficientDataError("2-point RANSAC needs at least two correspondences")
    a = p @ np.asarray(dR, float).T
    rot_only = np.linalg.norm(np.cross(c, a), axis=1) < np.sin(threshold)
    normals = np.cross(a, c)
    rng = np.random.default_rng(seed)
    best = np.zeros(n, bool)
    best_t = np.zeros(3)
    for _ in range(iterations):
        i, j = rng.choice(n, 2, replace=False)
        t = np.cross(normals[i], normals[j])
        nt = np.linalg.norm(t)
        if nt < 1e-12:
            continue
        t /= nt
        inl = epipolar_residuals(t, a, c) < threshold
        if inl.sum() > best.sum():
            best, best_t = inl, t
    if rot_only.sum() >= best.sum():
        return RansacResult(rot_only, np.zeros(3), iterations, rotation_only=True)
    # refine the direction on the consensus set: smallest right singular vector
    if best.sum() >= 2:
        _, _, vt = np.linalg.svd(normals[best])
        t = vt[-1] if vt[-1] @ best_t >= 0 else -vt[-1]
        refined = epipolar_residuals(t, a, c) < threshold
        if refined.sum() >= best.sum():
            best, best_t = refined, t
    return RansacResult(best, best_t, iterations)


def stereo_ransac_1pt(prev_points, cur_points, dR, threshold=0.05, iterations=50, seed=0):
    """Translation RANSAC on triangulated points.

    ``threshold`` is a scalar or per-point distance (m), or an ``(n, 3)`` array of
    per-axis tolerances for anisotropic stereo noise (residual scaled then
    compared with 1).
    """
    P = np.asarray(prev_points, float).reshape(-1, 3)
    C = np.asarray(cur_points, float).reshape(-1, 3)
    n = len(P)
    if n == 0:
        raise InsufficientDataError("1-point RANSAC needs at least one point pair")
    hyp = C - P @ np.asarray(dR, float).T  # per-point translation
    thr = np.asarray(threshold, float)
    if thr.ndim == 2:
        scale, limit = thr.reshape(n, 3), np.ones(n)
    else:
        scale, limit = np.ones((n, 3)), np.broadcast_to(thr, (n,))
    rng = np.random.default_rng(seed)
    best = np.zeros(n, bool)
    samples = range(n) if n <= iterations else rng.choice(n, iterations, replace=False)
    for k in samples:
        inl = np.linalg.norm((hyp - hyp[k]) / scale, axis=1) < limit
        if inl.sum() > best.sum():
            best = inl
    t = hyp[best].mean(axis=0)
    return RansacResult(best, t, len(samples))
