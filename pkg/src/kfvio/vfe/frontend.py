"""Keyframe-driven vision frontend.

Every frame runs only feature tracking. Keyframes additionally run detection,
rectification, stereo matching and geometric verification, then emit one
observation ``(u_left, v, u_right)`` per live feature in rectified pixels
(``u_right`` is NaN in mono mode or when stereo matching fails).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import TooFarError
from ..framecodec import decode_frame, encode_frame
from ..geometry import StereoRig
from .config import VfeConfig
from .detector import detect_candidates, select_features
from .pyramid import build_pyramid
from .ransac import mono_ransac_2pt, stereo_ransac_1pt
from .rectify import rectify_images, rectify_points, stereo_rectify
from .stereo import match_cost, stereo_match, triangulate
from .tracker import track_features

STAGES = ("FT", "FD", "UR", "SM", "GV")


@dataclass
class TrackingData:
    """Live features; capacity bounded by ``max_features``."""

    capacity: int
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    age: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    kf_bearing: np.ndarray = field(default_factory=lambda: np.full((0, 3), np.nan))
    kf_point: np.ndarray = field(default_factory=lambda: np.full((0, 3), np.nan))

    def __len__(self):
        return len(self.ids)

    def keep(self, mask):
        for name in ("ids", "pixels", "age", "kf_bearing", "kf_point"):
            setattr(self, name, getattr(self, name)[mask])

    def add(self, ids, pixels):
        n = len(ids)
        if len(self) + n > self.capacity:
            raise ValueError("tracking data over capacity")
        self.ids = np.concatenate([self.ids, ids])
        self.pixels = np.vstack([self.pixels, pixels])
        self.age = np.concatenate([self.age, np.zeros(n, np.int64)])
        self.kf_bearing = np.vstack([self.kf_bearing, np.full((n, 3), np.nan)])
        self.kf_point = np.vstack([self.kf_point, np.full((n, 3), np.nan)])


def _codec(pixels):
    """The production 26-bit codec; returns what a frame-buffer reader sees."""
    return decode_frame(encode_frame(pixels)).astype(np.float64)


def camera_rotation(camera, body_rotation):
    """Previous-to-current camera rotation from the body rotation ``R_i^T R_j``."""
    return camera.R_bc.T @ body_rotation.T @ camera.R_bc


class VisionFrontend:
    def __init__(self, rig: StereoRig, config: VfeConfig = VfeConfig(), stereo=True,
                 compression=True, max_age=10, seed=0, codec=None):
        self.config = config
        self.codec = codec or _codec
        self.stereo = stereo
        self.compression = compression
        self.max_age = max_age
        self.seed = seed
        self.rect = stereo_rectify(rig)
        self.tracking = TrackingData(config.max_features)
        self._next_id = 0
        self._prev_pyr = None
        self._kf_count = 0
        self.ops = {s: 0 for s in STAGES}
        self.frame_ops: list = []

    @property
    def camera(self):
        return self.rect.camera

    def _count(self, stage, n):
        self.ops[stage] += int(n)
        self._frame[stage] += int(n)

    def process(self, event, keyframe: bool, body_rotation=None) -> Optional[dict]:
        """Track on every frame; on keyframes return ``{landmark_id: (uL, v, uR)}``."""
        self._frame = {s: 0 for s in STAGES}
        raw = event.left.pixels
        img = self.codec(raw) if self.compression else raw.astype(np.float64)
        pyr = build_pyramid(img, self.config.pyramid_levels, self.config.lk_window)
        td = self.tracking
        if self._prev_pyr is not None and len(td):
            res = track_features(self._prev_pyr, pyr, td.pixels, self.config)
            self._count("FT", res.iterations * self.config.lk_window ** 2)
            td.pixels = res.points
            td.keep(res.status)
        self._prev_pyr = pyr
        out = self._keyframe(event, body_rotation) if keyframe else None
        self.frame_ops.append(self._frame)
        return out

    # ---------------------------------------------------------------- keyframe
    def _keyframe(self, event, body_rotation):
        cfg = self.config
        td = self.tracking
        raw = event.left.pixels
        h, w = raw.shape
        # FD runs on the uncompressed frame; selection happens after verification
        cand, scores = detect_candidates(raw, cfg)
        self._count("FD", raw.size)

        rect_px = rectify_points(td.pixels, self.rect) if len(td) else np.zeros((0, 2))
        ur = np.full(len(td), np.nan)
        points = np.full((len(td), 3), np.nan)
        if self.stereo:
            if event.right is None:
                raise ValueError("stereo frontend needs a right image")
            L, R = rectify_images(raw, event.right.pixels, self.rect)
            self._count("UR", 2 * raw.size)
            if self.compression:
                L, R = (self.codec(np.clip(np.rint(L), 0, 255).astype(np.uint8)),
                        self.codec(np.clip(np.rint(R), 0, 255).astype(np.uint8)))
            ur, points = self._match(L, R, rect_px)

        bearings = np.column_stack([(rect_px - [self.camera.cx, self.camera.cy]) /
                                    [self.camera.fx, self.camera.fy], np.ones(len(rect_px))])
        bearings /= np.linalg.norm(bearings, axis=1, keepdims=True) if len(bearings) else 1.0
        keep = self._verify(bearings, points, body_rotation)
        td.keep(keep)
        rect_px, ur, points, bearings = rect_px[keep], ur[keep], points[keep], bearings[keep]
        td.age += 1
        td.kf_bearing = bearings
        td.kf_point = points

        needed = cfg.max_features - len(td)
        new = select_features(cand, scores, td.pixels, needed, w, h, cfg)
        if len(new):
            ids = np.arange(self._next_id, self._next_id + len(new))
            self._next_id += len(new)
            td.add(ids, new)
            n_rect = rectify_points(new, self.rect)
            n_ur = np.full(len(new), np.nan)
            n_pts = np.full((len(new), 3), np.nan)
            if self.stereo:
                n_ur, n_pts = self._match(L, R, n_rect)
            nb = np.column_stack([(n_rect - [self.camera.cx, self.camera.cy]) /
                                  [self.camera.fx, self.camera.fy], np.ones(len(n_rect))])
            nb /= np.linalg.norm(nb, axis=1, keepdims=True)
            td.age[-len(new):] = 1
            td.kf_bearing[-len(new):] = nb
            td.kf_point[-len(new):] = n_pts
            rect_px = np.vstack([rect_px, n_rect])
            ur = np.concatenate([ur, n_ur])

        obs = {int(i): np.array([p[0], p[1], u]) for i, p, u in zip(td.ids, rect_px, ur)}
        # tracks that filled their age budget retire so new features can take their place
        td.keep(td.age < self.max_age)
        self._kf_count += 1
        return obs

    def _match(self, L, R, rect_px):
        ur = np.full(len(rect_px), np.nan)
        pts = np.full((len(rect_px), 3), np.nan)
        for k, p in enumerate(rect_px):
            d = stereo_match(L, R, p, self.config)
            self._count("SM", match_cost(self.config))
            if d is None:
                continue
            try:
                pts[k] = triangulate(p, d, self.camera, self.config.min_disparity)
            except TooFarError:
                continue
            ur[k] = p[0] - d
        return ur, pts

    def _verify(self, bearings, points, body_rotation):
        td = self.tracking
        keep = np.ones(len(td), bool)
        if body_rotation is None or len(td) == 0:
            return keep
        dR = camera_rotation(self.camera, body_rotation)
        seed = self.seed * 1_000_003 + self._kf_count
        cfg = self.config
        if self.stereo:
            both = np.all(np.isfinite(points), 1) & np.all(np.isfinite(td.kf_point), 1)
            idx = np.nonzero(both)[0]
            if len(idx):
                z = points[idx, 2]
                px = cfg.ransac_mono_threshold_px
                lateral = cfg.ransac_stereo_threshold + px * z / self.camera.fx
                depth = cfg.ransac_stereo_threshold + px * z * z / (self.camera.fx * self.camera.baseline)
                thr = np.column_stack([lateral, lateral, depth])
                res = stereo_ransac_1pt(td.kf_point[idx], points[idx], dR, thr,
                                        cfg.ransac_stereo_iterations, seed)
                self._count("GV", res.iterations * len(idx))
                keep[idx[~res.inliers]] = False
            return keep
        prev = np.all(np.isfinite(td.kf_bearing), 1)
        idx = np.nonzero(prev)[0]
        if len(idx) >= 2:
            thr = cfg.ransac_mono_threshold_px / self.camera.fx
            res = mono_ransac_2pt(td.kf_bearing[idx], bearings[idx], dR, thr,
                                  cfg.ransac_mono_iterations, seed)
            self._count("GV", res.iterations * len(idx))
            keep[idx[~res.inliers]] = False
        return keep


class SyntheticFrontend:
    """Feature-level frontend for synthetic scenarios: exact projections plus pixel noise.

    Landmarks keep one track id until the track reaches ``max_age`` keyframes,
    then restart under a fresh id. Initial ages are staggered so tracks retire
    on different keyframes.
    """

    def __init__(self, scenario, stereo=True, max_age=10, max_features=200, seed=0):
        self.scenario = scenario
        self.stereo = stereo
        self.max_age = max_age
        self.max_features = max_features
        self.rng = np.random.default_rng(seed)
        self.camera = scenario.rig.left
        self.sigma = scenario.config.pixel_noise
        n = len(scenario.landmarks)
        self._track = np.arange(n)
        self._age = self.rng.integers(0, max_age, n)
        self._next_id = n
        self.ops = {s: 0 for s in STAGES}
        self.frame_ops: list = []

    def process(self, event, keyframe: bool, body_rotation=None) -> Optional[dict]:
        self.frame_ops.append({s: 0 for s in STAGES})
        if not keyframe:
            return None
        from ..dataset.synthetic import camera_points

        cam = self.camera
        state = self.scenario.state_at(event.timestamp)
        P = camera_points(cam, state, self.scenario.landmarks)
        front = P[:, 2] > 0.2
        z = np.where(front, P[:, 2], 1.0)
        u = cam.fx * P[:, 0] / z + cam.cx
        v = cam.fy * P[:, 1] / z + cam.cy
        ur = cam.fx * (P[:, 0] - cam.baseline) / z + cam.cx
        visible = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
        if self.stereo:
            visible &= (ur >= 0)
        noise = self.rng.normal(scale=self.sigma, size=(len(P), 3)) if self.sigma > 0 else np.zeros((len(P), 3))
        obs = {}
        for m in np.nonzero(visible)[0][: self.max_features]:
            if self._age[m] >= self.max_age:
                self._track[m] = self._next_id
                self._next_id += 1
                self._age[m] = 0
            self._age[m] += 1
            right = ur[m] + noise[m, 2] if self.stereo else np.nan
            obs[int(self._track[m])] = np.array([u[m] + noise[m, 0], v[m] + noise[m, 1], right])
        # a landmark that drops out of view loses its track
        gone = ~visible
        self._track[gone] = np.arange(self._next_id, self._next_id + gone.sum())
        self._next_id += int(gone.sum())
        self._age[gone] = 0
        return obs
