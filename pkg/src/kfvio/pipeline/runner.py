"""Frame-by-frame orchestration of the two processing modes.

Non-keyframes only run feature tracking and keep integrating the IMU.
Keyframes run the rest of the vision frontend, close the current
preintegration interval and take one smoother step.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..backend.factors import VisionModel
from ..backend.smoother import Smoother, SmootherConfig
from ..dataset.euroc import EurocSequence, load_euroc
from ..dataset.synthetic import SyntheticScenario, preset as scenario_preset, synth_scenario
from ..errors import ConfigError, StreamError
from ..geometry import KFState, quat_from_rotation
from ..ife import Preintegrator
from ..vfe.frontend import STAGES, SyntheticFrontend, VisionFrontend
from .config import PipelineConfig
from .evaluate import evaluate_trajectory
from .model import model_report


def gravity_aligned_rotation(mean_accel):
    """Roll and pitch that make the mean specific force point along world +z; yaw is zero."""
    ax, ay, az = np.asarray(mean_accel, float)
    roll = np.arctan2(ay, az)
    pitch = np.arctan2(-ax, np.hypot(ay, az))
    cr, sr, cp, sp = np.cos(roll), np.sin(roll), np.cos(pitch), np.sin(pitch)
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Ry @ Rx


@dataclass
class StateRecord:
    timestamp: int
    kf_id: int
    state: KFState

    def row(self):
        s = self.state
        return [self.timestamp, *s.position, *quat_from_rotation(s.rotation), *s.velocity]


@dataclass
class RunReport:
    config: dict
    frame_classes: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    op_counts: dict = field(default_factory=dict)
    frame_ops: list = field(default_factory=list)
    memory: dict = field(default_factory=dict)
    error: Optional[dict] = None
    dropped_observations: int = 0
    landmarks: dict = field(default_factory=dict)

    @property
    def keyframes(self):
        return sum(c == "KF" for c in self.frame_classes)

    def positions(self):
        return np.array([r.state.position for r in self.trajectory]).reshape(-1, 3)

    def timestamps(self):
        return np.array([r.timestamp for r in self.trajectory], dtype=np.int64)

    def to_dict(self):
        return {
            "config": self.config,
            "frames": len(self.frame_classes),
            "keyframes": self.keyframes,
            "frame_classes": self.frame_classes,
            "trajectory": [[float(x) if k else int(x) for k, x in enumerate(r.row())]
                           for r in self.trajectory],
            "op_counts": self.op_counts,
            "frame_ops": self.frame_ops,
            "memory": self.memory,
            "error": self.error,
            "dropped_observations": self.dropped_observations,
            "landmark_count": len(self.landmarks),
        }


class Pipeline:
    def __init__(self, config: PipelineConfig, imu, frontend, camera):
        self.config = config
        self.imu = list(imu)
        self._imu_t = [s.timestamp for s in self.imu]
        self.frontend = frontend
        model = VisionModel(camera, stereo=config.stereo, pixel_sigma=config.pixel_sigma)
        self.smoother = Smoother(model, SmootherConfig(horizon=config.horizon,
                                                       feature_age=config.feature_age,
                                                       max_tracks=config.max_tracks,
                                                       damping=config.damping))
        self.preint = Preintegrator()
        self.report = RunReport(config.to_dict())
        self._frame_index = 0
        self._last_t: Optional[int] = None
        self._kf_id = -1
        self._backend_macs = 0

    # ----------------------------------------------------------------- IMU
    def _imu_between(self, t0, t1):
        lo = max(bisect.bisect_right(self._imu_t, t0) - 1, 0)
        hi = bisect.bisect_left(self._imu_t, t1) + 1
        return self.imu[lo:hi]

    def _bootstrap_state(self, t0):
        t1 = t0 + int(self.config.bootstrap_seconds * 1e9)
        acc = [s.linear_acceleration for s in self.imu if t0 <= s.timestamp <= t1]
        if not acc:
            acc = [s.linear_acceleration for s in self._imu_between(t0, t0 + 1)]
        R = gravity_aligned_rotation(np.mean(acc, axis=0)) if acc else np.eye(3)
        return KFState(rotation=R, position=np.zeros(3), velocity=np.zeros(3))

    # --------------------------------------------------------------- frames
    def process_frame(self, event) -> Optional[StateRecord]:
        t = int(event.timestamp)
        if self._last_t is not None and t <= self._last_t:
            raise StreamError(f"frame timestamp {t} does not advance past {self._last_t}")
        if self._last_t is not None:
            self.preint.integrate_span(self._imu_between(self._last_t, t), self._last_t, t)
        self._last_t = t

        sm = self.smoother
        moved = 0.0
        if sm.states and self.preint.current.sample_count:
            last = sm.states[-1]
            moved = float(np.linalg.norm(sm.predict(last, self.preint.current).position - last.position))
        is_kf = self.config.kf_policy.select(self._frame_index, moved)
        self._frame_index += 1
        body_rotation = None
        if is_kf and sm.states and self.preint.current.sample_count:
            cur = self.preint.current
            last = sm.states[-1]
            body_rotation = cur.corrected(last.gyro_bias, last.accel_bias)[0]
        obs = self.frontend.process(event, is_kf, body_rotation)
        ops = dict(self.frontend.frame_ops[-1])
        ops["BE"] = 0
        record = None
        if is_kf:
            self._kf_id += 1
            if not sm.states:
                sm.initialize(self._kf_id, t, self._bootstrap_state(t), obs)
            else:
                delta = self.preint.finalize(self._kf_id - 1, self._kf_id)
                sm.add_keyframe(self._kf_id, t, delta, obs)
            total = sm.op_counts["solver_macs"] + sm.op_counts["backsub_macs"]
            ops["BE"] = total - self._backend_macs
            self._backend_macs = total
            state = sm.states[-1]
            self.preint.reset(state.gyro_bias, state.accel_bias)
            record = StateRecord(t, self._kf_id, state)
            self.report.trajectory.append(record)
        self.report.frame_classes.append("KF" if is_kf else "non-KF")
        self.report.frame_ops.append(ops)
        return record

    def finish(self, groundtruth=None) -> RunReport:
        r = self.report
        r.op_counts = {s: int(self.frontend.ops[s]) for s in STAGES}
        r.op_counts.update({k: int(v) for k, v in self.smoother.op_counts.items()})
        r.dropped_observations = self.smoother.dropped_observations
        r.memory = model_report(self.config)
        r.landmarks = self.smoother.landmarks() if self.smoother.states else {}
        if groundtruth is not None and len(r.trajectory) >= 2:
            r.error = evaluate_trajectory(r.timestamps(), r.positions(), groundtruth).to_dict()
        return r


# ------------------------------------------------------------------ datasets

def open_dataset(spec, seed=0):
    """``synthetic:NAME`` or an EuRoC directory."""
    if isinstance(spec, (SyntheticScenario, EurocSequence)):
        return spec
    text = str(spec)
    if text.startswith("synthetic:"):
        cfg = scenario_preset(text.split(":", 1)[1])
        cfg.seed = seed
        return synth_scenario(cfg)
    return load_euroc(text)


def make_frontend(config: PipelineConfig, dataset):
    kind = config.frontend
    if kind == "auto":
        kind = ("features" if isinstance(dataset, SyntheticScenario) and not dataset.config.render
                else "images")
    if kind == "features":
        if not isinstance(dataset, SyntheticScenario):
            raise ConfigError("the feature-level frontend needs a synthetic scenario")
        fe = SyntheticFrontend(dataset, stereo=config.stereo, max_age=config.feature_age,
                               max_features=config.features, seed=config.seed)
        return fe, fe.camera
    if isinstance(dataset, SyntheticScenario) and not dataset.config.render:
        raise ConfigError("image frontend needs a rendered scenario (render: true)")
    fe = VisionFrontend(dataset.rig, config.vfe, stereo=config.stereo,
                        compression=config.compression, max_age=config.feature_age,
                        seed=config.seed)
    return fe, fe.camera


def run_sequence(config: PipelineConfig, dataset, out_dir=None, max_frames=None) -> RunReport:
    data = open_dataset(dataset, config.seed)
    if config.stereo and not data.stereo:
        raise ConfigError("stereo mode requested but the dataset has no right camera")
    frontend, camera = make_frontend(config, data)
    pipe = Pipeline(config, data.imu, frontend, camera)
    for event in data.frames(stereo=config.stereo, stop=max_frames):
        pipe.process_frame(event)
    report = pipe.finish(data.groundtruth)
    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


def write_outputs(report: RunReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w") as fh:
        fh.write("timestamp_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz\n")
        for r in report.trajectory:
            row = r.row()
            fh.write(",".join([str(int(row[0]))] + [repr(float(x)) for x in row[1:]]) + "\n")
    pts = sorted(report.landmarks.items())
    with open(out / "map.ply", "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts)}\nproperty float x\nproperty float y\nproperty float z\n"
                 "property int landmark_id\nend_header\n")
        for lid, p in pts:
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {lid}\n")
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
    return out
