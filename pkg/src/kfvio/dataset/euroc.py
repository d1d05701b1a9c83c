"""EuRoC / ASL directory reader and writer.

Layout (optionally under a ``mav0/`` subdirectory)::

    imu0/data.csv                      t_ns, wx, wy, wz, ax, ay, az
    cam0/data.csv, cam0/data/*.png     t_ns, filename
    cam1/...                           (stereo only)
    state_groundtruth_estimate0/data.csv
        t_ns, px, py, pz, qw, qx, qy, qz, vx, vy, vz, bgx, bgy, bgz, bax, bay, baz
    cam0/sensor.yaml, cam1/sensor.yaml (optional; EuRoC values used otherwise)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import yaml
from PIL import Image

from ..errors import MissingFileError, ParseError
from ..framecodec import Frame
from ..geometry import CameraCalib, StereoRig
from .types import FrameEvent, GroundTruth, ImuSample, check_monotonic

# Published EuRoC calibration (body = IMU frame).
EUROC_CAM0 = dict(
    intrinsics=[458.654, 457.296, 367.215, 248.375],
    distortion_coefficients=[-0.28340811, 0.07395907, 0.00019359, 1.76187114e-05],
    T_BS=[0.0148655429818, -0.999880929698, 0.00414029679422, -0.0216401454975,
          0.999557249008, 0.0149672133247, 0.025715529948, -0.064676986768,
          -0.0257744366974, 0.00375618835797, 0.999660727178, 0.00981073058949,
          0.0, 0.0, 0.0, 1.0],
    resolution=[752, 480],
)
EUROC_CAM1 = dict(
    intrinsics=[457.587, 456.134, 379.999, 255.238],
    distortion_coefficients=[-0.28368365, 0.07451284, -0.00010473, -3.55590700e-05],
    T_BS=[0.0125552670891, -0.999755099723, 0.0182237714554, -0.0198435579556,
          0.999598781151, 0.0130119051815, 0.0251588363115, 0.0453689425024,
          -0.0253898008918, 0.0179005838253, 0.999517347078, 0.00786212447038,
          0.0, 0.0, 0.0, 1.0],
    resolution=[752, 480],
)


def calib_from_sensor(sensor: dict) -> CameraCalib:
    T = sensor["T_BS"]
    if isinstance(T, dict):
        T = T["data"]
    T = np.asarray(T, float).reshape(4, 4)
    fu, fv, cu, cv = sensor["intrinsics"]
    k1, k2, p1, p2 = sensor.get("distortion_coefficients", [0, 0, 0, 0])
    w, h = sensor.get("resolution", [752, 480])
    return CameraCalib(fu, fv, cu, cv, k1, k2, p1, p2, R_bc=T[:3, :3], t_bc=T[:3, 3],
                       width=int(w), height=int(h))


def euroc_rig() -> StereoRig:
    return StereoRig(calib_from_sensor(EUROC_CAM0), calib_from_sensor(EUROC_CAM1))


def _root(directory):
    d = Path(directory)
    if not d.is_dir():
        raise MissingFileError(f"dataset directory {d} does not exist")
    return d / "mav0" if (d / "mav0").is_dir() else d


def _rows(path: Path, ncols: int, max_cols=None):
    """Yield ``(line_number, fields)`` for every data row of a CSV file."""
    if not path.is_file():
        raise MissingFileError(f"missing {path}")
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) < ncols:
                raise ParseError(path, lineno, f"expected {ncols} columns, got {len(row)}")
            yield lineno, [f.strip() for f in row[:max_cols or ncols]]


def _numbers(path, lineno, fields):
    try:
        return int(fields[0]), np.array([float(f) for f in fields[1:]])
    except ValueError as exc:
        raise ParseError(path, lineno, str(exc)) from None


def read_imu(path) -> list:
    path = Path(path)
    out = []
    for lineno, fields in _rows(path, 7):
        t, vals = _numbers(path, lineno, fields)
        out.append(ImuSample(t, vals[:3], vals[3:6]))
    check_monotonic([s.timestamp for s in out], "IMU")
    return out


def read_camera_index(cam_dir: Path):
    path = cam_dir / "data.csv"
    out = []
    for lineno, fields in _rows(path, 2):
        try:
            out.append((int(fields[0]), fields[1]))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    check_monotonic([t for t, _ in out], str(cam_dir.name))
    return out


def read_groundtruth(path) -> GroundTruth:
    path = Path(path)
    ts, rows = [], []
    for lineno, fields in _rows(path, 11, 17):
        t, vals = _numbers(path, lineno, fields)
        ts.append(t)
        rows.append(np.pad(vals, (0, max(0, 16 - len(vals))))[:16])
    if not rows:
        raise ParseError(path, 0, "no ground-truth rows")
    check_monotonic(ts, "ground truth")
    a = np.array(rows)
    q = a[:, 3:7]
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        q = q / norms
    return GroundTruth(np.array(ts, dtype=np.int64), a[:, 0:3], q, a[:, 7:10], a[:, 10:13], a[:, 13:16])


def load_image(path: Path) -> Frame:
    if not path.is_file():
        raise MissingFileError(f"missing image {path}")
    with Image.open(path) as im:
        return Frame(np.asarray(im.convert("L"), dtype=np.uint8))


@dataclass
class EurocSequence:
    root: Path
    imu: list
    left_index: list
    right_index: Optional[list]
    groundtruth: Optional[GroundTruth]
    rig: StereoRig

    @property
    def stereo(self):
        return self.right_index is not None

    @property
    def frame_timestamps(self):
        return np.array([t for t, _ in self.left_index], dtype=np.int64)

    def frames(self, stereo: Optional[bool] = None, start=0, stop=None) -> Iterator[FrameEvent]:
        """Decode frames lazily; right images are paired by timestamp."""
        use_right = self.stereo if stereo is None else stereo and self.stereo
        right = dict(self.right_index) if use_right else {}
        for t, name in self.left_index[start:stop]:
            left = load_image(self.root / "cam0" / "data" / name)
            r = None
            if use_right:
                if t not in right:
                    continue
                r = load_image(self.root / "cam1" / "data" / right[t])
            yield FrameEvent(t, left, r)


def _sensor_yaml(cam_dir: Path, default):
    path = cam_dir / "sensor.yaml"
    if not path.is_file():
        return default
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return data if data and "intrinsics" in data else default


def load_euroc(directory) -> EurocSequence:
    root = _root(directory)
    imu = read_imu(root / "imu0" / "data.csv")
    left = read_camera_index(root / "cam0")
    right = read_camera_index(root / "cam1") if (root / "cam1" / "data.csv").is_file() else None
    gt_path = root / "state_groundtruth_estimate0" / "data.csv"
    gt = read_groundtruth(gt_path) if gt_path.is_file() else None
    rig = StereoRig(calib_from_sensor(_sensor_yaml(root / "cam0", EUROC_CAM0)),
                    calib_from_sensor(_sensor_yaml(root / "cam1", EUROC_CAM1)))
    return EurocSequence(root, imu, left, right, gt, rig)


def write_euroc(directory, imu, frames=(), groundtruth: Optional[GroundTruth] = None):
    """Write streams in the ASL layout (PNG images). Returns the root path."""
    root = Path(directory) / "mav0"
    (root / "imu0").mkdir(parents=True, exist_ok=True)
    with open(root / "imu0" / "data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["#timestamp [ns]", "w_RS_S_x [rad s^-1]", "w_RS_S_y [rad s^-1]",
                    "w_RS_S_z [rad s^-1]", "a_RS_S_x [m s^-2]", "a_RS_S_y [m s^-2]",
                    "a_RS_S_z [m s^-2]"])
        for s in imu:
            w.writerow([s.timestamp, *map(repr, map(float, s.angular_velocity)),
                        *map(repr, map(float, s.linear_acceleration))])
    frames = list(frames)
    for cam in ("cam0", "cam1"):
        events = [f for f in frames if cam == "cam0" or f.right is not None]
        if cam == "cam1" and not events:
            continue
        (root / cam / "data").mkdir(parents=True, exist_ok=True)
        with open(root / cam / "data.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["#timestamp [ns]", "filename"])
            for f in events:
                name = f"{f.timestamp}.png"
                img = f.left if cam == "cam0" else f.right
                Image.fromarray(img.pixels).save(root / cam / "data" / name)
                w.writerow([f.timestamp, name])
    if groundtruth is not None:
        gt = groundtruth
        (root / "state_groundtruth_estimate0").mkdir(parents=True, exist_ok=True)
        n = len(gt)
        bg = gt.gyro_bias if gt.gyro_bias is not None else np.zeros((n, 3))
        ba = gt.accel_bias if gt.accel_bias is not None else np.zeros((n, 3))
        with open(root / "state_groundtruth_estimate0" / "data.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["#timestamp", "p_x", "p_y", "p_z", "q_w", "q_x", "q_y", "q_z",
                        "v_x", "v_y", "v_z", "bw_x", "bw_y", "bw_z", "ba_x", "ba_y", "ba_z"])
            for k in range(n):
                w.writerow([int(gt.timestamps[k]), *map(repr, map(float, np.concatenate(
                    [gt.positions[k], gt.quaternions[k], gt.velocities[k], bg[k], ba[k]])))])
    return root
