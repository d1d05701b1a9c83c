"""Stereo undistortion and rectification through precomputed remap tables."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import map_coordinates

from ..errors import ConfigError
from ..geometry import CameraCalib, StereoRig, bearing_vectors, project


@dataclass(frozen=True)
class Rectification:
    rig: StereoRig
    R_left: np.ndarray     # rectified <- original left camera
    R_right: np.ndarray    # rectified <- original right camera
    camera: CameraCalib    # rectified left camera (pinhole, body extrinsic, baseline)
    map_left: np.ndarray   # (2, h, w) source (u, v) per rectified pixel
    map_right: np.ndarray

    @property
    def baseline(self):
        return self.camera.baseline


def stereo_rectify(rig: StereoRig) -> Rectification:
    """Rotate both cameras so the baseline is the common x axis; keep the left intrinsics."""
    R_rl, t_rl = rig.right_from_left()
    c_right = -R_rl.T @ t_rl  # right centre in left coordinates
    b = float(np.linalg.norm(c_right))
    if not np.isfinite(b) or b < 1e-9:
        raise ConfigError("stereo baseline is zero")
    e1 = c_right / b
    z = np.array([0.0, 0.0, 1.0]) + R_rl.T @ np.array([0.0, 0.0, 1.0])
    e2 = np.cross(z, e1)
    if np.linalg.norm(e2) < 1e-6:
        raise ConfigError("baseline parallel to the optical axis; cannot rectify")
    e2 /= np.linalg.norm(e2)
    R_left = np.vstack([e1, e2, np.cross(e1, e2)])
    if not np.all(np.isfinite(R_left)) or abs(np.linalg.det(R_left) - 1) > 1e-9:
        raise ConfigError("rectifying rotation is not invertible")
    R_right = R_left @ R_rl.T
    left = rig.left
    cam = replace(left.pinhole(), baseline=b, R_bc=left.R_bc @ R_left.T, t_bc=left.t_bc)
    return Rectification(rig, R_left, R_right, cam,
                         _remap_table(left, cam, R_left), _remap_table(rig.right, cam, R_right))


def _remap_table(original: CameraCalib, rect: CameraCalib, R_rect):
    h, w = rect.height, rect.width
    v, u = np.mgrid[0:h, 0:w].astype(float)
    rays = np.stack([(u - rect.cx) / rect.fx, (v - rect.cy) / rect.fy, np.ones_like(u)], -1)
    src = rays.reshape(-1, 3) @ R_rect  # rows: R_rect.T @ ray
    out = np.full((src.shape[0], 2), np.nan)
    front = src[:, 2] > 1e-9
    out[front] = project(original, src[front])
    return out.reshape(h, w, 2).transpose(2, 0, 1)


def remap(image, table):
    """Bilinear sampling of ``image`` at ``table``; out-of-range pixels become 0."""
    img = np.asarray(image, dtype=np.float64)
    u, v = table
    valid = np.isfinite(u) & np.isfinite(v)
    out = map_coordinates(img, [np.where(valid, v, -10), np.where(valid, u, -10)],
                          order=1, mode="constant", cval=0.0)
    return out


def rectify_images(left, right, rect: Rectification):
    return remap(left, rect.map_left), remap(right, rect.map_right)


def rectify_points(pixels, rect: Rectification, side="left"):
    """Original (distorted) pixels -> rectified pixels."""
    calib = rect.rig.left if side == "left" else rect.rig.right
    R = rect.R_left if side == "left" else rect.R_right
    rays = bearing_vectors(calib, np.asarray(pixels, float).reshape(-1, 2)) @ R.T
    return project(rect.camera, rays)


def unrectify_points(pixels, rect: Rectification, side="left"):
    calib = rect.rig.left if side == "left" else rect.rig.right
    R = rect.R_left if side == "left" else rect.R_right
    px = np.asarray(pixels, float).reshape(-1, 2)
    c = rect.camera
    rays = np.column_stack([(px[:, 0] - c.cx) / c.fx, (px[:, 1] - c.cy) / c.fy, np.ones(len(px))])
    return project(calib, rays @ R)


def valid_fraction(table, width, height):
    u, v = table
    ok = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
    return float(ok.mean())
