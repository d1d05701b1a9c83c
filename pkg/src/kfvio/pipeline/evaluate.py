"""Trajectory alignment and error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError
from ..dataset.types import GroundTruth


@dataclass(frozen=True)
class TrajectoryError:
    ate_rmse: float           # m, after rigid alignment
    normalized: float         # percent of ground-truth path length
    ate_rmse_yaw: float       # m, after yaw + translation alignment
    normalized_yaw: float
    path_length: float        # m
    count: int

    def to_dict(self):
        return dict(self.__dict__)


def umeyama(src, dst, yaw_only=False):
    """Rigid ``(R, t)`` minimizing ``sum |dst - (R src + t)|^2`` (no scale)."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    mu_s, mu_d = src.mean(0), dst.mean(0)
    A, B = src - mu_s, dst - mu_d
    if yaw_only:
        # rotation about z only: maximize sum of 2-D cross/dot terms
        s = np.sum(A[:, 0] * B[:, 1] - A[:, 1] * B[:, 0])
        c = np.sum(A[:, 0] * B[:, 0] + A[:, 1] * B[:, 1])
        th = np.arctan2(s, c)
        R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    else:
        U, _, Vt = np.linalg.svd(B.T @ A)
        D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
        R = U @ D @ Vt
    return R, mu_d - R @ mu_s


def evaluate_trajectory(timestamps, positions, gt: GroundTruth) -> TrajectoryError:
    ts = np.asarray(timestamps, dtype=np.int64)
    est = np.asarray(positions, float).reshape(-1, 3)
    t0, t1 = gt.span()
    inside = (ts >= t0) & (ts <= t1)
    if inside.sum() < 2:
        raise InsufficientDataError("estimate and ground truth do not overlap in time")
    ts, est = ts[inside], est[inside]
    ref = gt.interpolate_positions(ts)
    length = gt.path_length(ts[0], ts[-1])

    def rmse(yaw_only):
        R, t = umeyama(est, ref, yaw_only)
        return float(np.sqrt(np.mean(np.sum((est @ R.T + t - ref) ** 2, axis=1))))

    full, yaw = rmse(False), rmse(True)
    norm = (lambda e: 100.0 * e / length if length > 0 else float("nan"))
    return TrajectoryError(full, norm(full), yaw, norm(yaw), length, int(len(ts)))
