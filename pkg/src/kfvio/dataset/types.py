"""Sensor stream records."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import StreamError
from ..framecodec import Frame


@dataclass(frozen=True)
class ImuSample:
    timestamp: int  # ns
    angular_velocity: np.ndarray  # rad/s, body frame
    linear_acceleration: np.ndarray  # m/s^2, specific force in body frame

    def __post_init__(self):
        object.__setattr__(self, "timestamp", int(self.timestamp))
        object.__setattr__(self, "angular_velocity", np.asarray(self.angular_velocity, dtype=float))
        object.__setattr__(self, "linear_acceleration", np.asarray(self.linear_acceleration, dtype=float))


@dataclass(frozen=True)
class FrameEvent:
    timestamp: int  # ns
    left: Frame
    right: Optional[Frame] = None

    @property
    def stereo(self):
        return self.right is not None


@dataclass
class GroundTruth:
    """Time-indexed body poses. Quaternions are Hamilton (w, x, y, z), world-from-body."""

    timestamps: np.ndarray  # (n,) int64 ns
    positions: np.ndarray  # (n, 3)
    quaternions: np.ndarray  # (n, 4)
    velocities: np.ndarray  # (n, 3)
    gyro_bias: Optional[np.ndarray] = None
    accel_bias: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.timestamps)

    def span(self):
        return int(self.timestamps[0]), int(self.timestamps[-1])

    def interpolate_positions(self, t):
        t = np.asarray(t, dtype=np.int64)
        ts = self.timestamps
        return np.column_stack([np.interp(t.astype(float), ts.astype(float), self.positions[:, k])
                                for k in range(3)])

    def path_length(self, t0=None, t1=None):
        mask = np.ones(len(self), bool)
        if t0 is not None:
            mask &= self.timestamps >= t0
        if t1 is not None:
            mask &= self.timestamps <= t1
        p = self.positions[mask]
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) if len(p) > 1 else 0.0


def check_monotonic(timestamps, what="stream"):
    ts = np.asarray(timestamps, dtype=np.int64)
    if len(ts) > 1 and np.any(np.diff(ts) <= 0):
        bad = int(np.nonzero(np.diff(ts) <= 0)[0][0]) + 1
        raise StreamError(f"{what} timestamps not strictly increasing at index {bad}")
