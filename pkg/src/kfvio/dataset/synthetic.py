"""Analytic synthetic scenarios with exact ground truth.

Trajectories are closed-form in position and ZYX Euler angles, so velocity,
acceleration and body rates are exact derivatives rather than finite
differences. Motion can be faded in after a rest period by a C4 polynomial
envelope, so acceleration stays twice differentiable.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..errors import ConfigError, DegenerateScenarioError
from ..framecodec import Frame
from ..geometry import CameraCalib, KFState, StereoRig, quat_from_rotation, so3_log
from .types import FrameEvent, GroundTruth, ImuSample

# camera optical axis along body +x, image right = body -y, image down = body -z
R_BC_FORWARD = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])

TRAJECTORIES = ("static", "rotate", "circle", "wavy", "line")
LAYOUTS = ("box", "cylinder")
IMU_SAMPLING = ("point", "increment")


@dataclass
class ScenarioConfig:
    trajectory: str = "wavy"
    duration: float = 10.0
    rest: float = 1.0           # wavy: seconds at rest before the motion fades in
    ramp: float = 2.0           # wavy: fade-in length
    amplitude: float = 1.0      # wavy: position amplitude (m)
    rotation_scale: float = 1.0  # wavy: scales the attitude oscillation
    radius: float = 2.0         # circle
    angular_rate: float = 0.5   # circle / rotate (rad/s)
    speed: float = 1.0          # line (m/s)
    imu_rate: float = 200.0
    imu_sampling: str = "point"  # or "increment": samples reproduce the exact R and v step
    camera_rate: float = 20.0
    n_landmarks: int = 50
    landmark_layout: str = "box"
    landmark_depth: tuple = (4.0, 8.0)  # box: x range ahead; cylinder: distance outside path
    landmark_spread: tuple = (4.0, 2.5)  # box: half extents in y and z
    gravity: float = 9.81
    gyro_noise: float = 0.0       # continuous densities (rad/s/sqrt(Hz), m/s^2/sqrt(Hz))
    accel_noise: float = 0.0
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    accel_bias: tuple = (0.0, 0.0, 0.0)
    pixel_noise: float = 0.0
    stereo: bool = True
    render: bool = False
    dot_radius: float = 2.0
    fx: float = 458.0
    fy: float = 457.0
    cx: float = 367.0
    cy: float = 248.0
    width: int = 752
    height: int = 480
    baseline: float = 0.11
    distortion: tuple = (0.0, 0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.trajectory not in TRAJECTORIES:
            raise ConfigError(f"unknown trajectory {self.trajectory!r}; expected one of {TRAJECTORIES}")
        if self.landmark_layout not in LAYOUTS:
            raise ConfigError(f"unknown landmark layout {self.landmark_layout!r}")
        if self.imu_sampling not in IMU_SAMPLING:
            raise ConfigError(f"unknown imu sampling {self.imu_sampling!r}; expected one of {IMU_SAMPLING}")
        if self.duration <= 0 or self.imu_rate <= 0 or self.camera_rate <= 0:
            raise ConfigError("duration and rates must be positive")
        if abs(self.imu_rate / self.camera_rate - round(self.imu_rate / self.camera_rate)) > 1e-9:
            raise ConfigError("imu_rate must be an integer multiple of camera_rate")
        for name in ("gyro_bias", "accel_bias", "landmark_depth", "landmark_spread", "distortion"):
            setattr(self, name, tuple(float(x) for x in getattr(self, name)))

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data.get("scenario", data))

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def euroc_noise(**overrides) -> ScenarioConfig:
    """EuRoC-level IMU noise and bias plus 1 px feature noise."""
    base = dict(gyro_noise=1.6968e-4, accel_noise=2.0e-3, gyro_bias=(0.002, -0.001, 0.0015),
                accel_bias=(0.02, -0.03, 0.025), pixel_noise=1.0)
    base.update(overrides)
    return ScenarioConfig(**base)


PRESETS = {
    "wavy": lambda: ScenarioConfig(),
    "wavy-noisy": euroc_noise,
    "circle": lambda: ScenarioConfig(trajectory="circle", landmark_layout="cylinder"),
    "static": lambda: ScenarioConfig(trajectory="static", duration=3.0),
    "line": lambda: ScenarioConfig(trajectory="line", duration=5.0),
    # 20 keyframes at one KF per 4 frames, 50 landmarks
    "kf20": lambda: ScenarioConfig(duration=3.9, rest=0.5, imu_sampling="increment"),
    "kf20-noisy": lambda: euroc_noise(duration=3.9, rest=0.5),
    "rendered": lambda: ScenarioConfig(render=True, n_landmarks=600, duration=6.0, rest=0.5,
                                       amplitude=0.5, rotation_scale=0.3,
                                       landmark_spread=(6.0, 4.0)),
}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown synthetic preset {name!r}; have {sorted(PRESETS)}") from None


# ----------------------------------------------------------------- kinematics

def _smoothstep(t, start, length):
    """C4 ramp 0 -> 1 (degree-9 smoothstep) and its first two derivatives."""
    x = np.clip((t - start) / length, 0.0, 1.0)
    inside = (t > start) & (t < start + length)
    s = x**5 * (126 - 420 * x + 540 * x**2 - 315 * x**3 + 70 * x**4)
    ds = np.where(inside, 630 * x**4 * (1 - x) ** 4 / length, 0.0)
    dds = np.where(inside, 2520 * x**3 * (1 - x) ** 3 * (1 - 2 * x) / length**2, 0.0)
    return s, ds, dds


def _sine(t, amp, w, phase=0.0):
    a = w * t + phase
    return amp * np.sin(a), amp * w * np.cos(a), -amp * w * w * np.sin(a)


def _times(e, f):
    return e[0] * f[0], e[1] * f[0] + e[0] * f[1], e[2] * f[0] + 2 * e[1] * f[1] + e[0] * f[2]


def _zero(t):
    z = np.zeros_like(t)
    return z, z, z


def _euler_rotation(yaw, pitch, roll):
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Rz @ Ry @ Rx


def _body_rate(pitch, roll, dyaw, dpitch, droll):
    """Body angular velocity for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    return np.array([droll - dyaw * sp,
                     dpitch * cr + dyaw * cp * sr,
                     -dpitch * sr + dyaw * cp * cr])


@dataclass
class KinematicSample:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    rotation: np.ndarray
    omega_body: np.ndarray


class Trajectory:
    def __init__(self, config: ScenarioConfig):
        self.config = config

    def _channels(self, t):
        c = self.config
        t = np.asarray(t, float)
        if c.trajectory == "static":
            return [_zero(t)] * 6
        if c.trajectory == "rotate":
            w = c.angular_rate
            return [_zero(t)] * 3 + [(w * t, w + 0 * t, 0 * t), _zero(t), _zero(t)]
        if c.trajectory == "line":
            v = c.speed
            return [(v * t, v + 0 * t, 0 * t), _zero(t), _zero(t), _zero(t), _zero(t), _zero(t)]
        if c.trajectory == "circle":
            r, w = c.radius, c.angular_rate
            px = (r * np.cos(w * t), -r * w * np.sin(w * t), -r * w * w * np.cos(w * t))
            py = (r * np.sin(w * t), r * w * np.cos(w * t), -r * w * w * np.sin(w * t))
            # facing outward: yaw follows the polar angle
            return [px, py, _zero(t), (w * t, w + 0 * t, 0 * t), _zero(t), _zero(t)]
        e = _smoothstep(t, c.rest, c.ramp)
        A, k = c.amplitude, c.rotation_scale
        return [
            _times(e, _sine(t, A, 0.9)),
            _times(e, _sine(t, 0.7 * A, 1.3, 0.4)),
            _times(e, _sine(t, 0.25 * A, 1.1, 1.0)),
            _times(e, _sine(t, 0.35 * k, 0.7, 0.2)),
            _times(e, _sine(t, 0.12 * k, 1.1, 0.5)),
            _times(e, _sine(t, 0.10 * k, 1.3, 1.2)),
        ]

    def sample(self, t) -> KinematicSample:
        ch = self._channels(np.asarray(float(t)))
        (px, py, pz, yaw, pitch, roll) = ch
        p = np.array([px[0], py[0], pz[0]], dtype=float)
        v = np.array([px[1], py[1], pz[1]], dtype=float)
        a = np.array([px[2], py[2], pz[2]], dtype=float)
        R = _euler_rotation(float(yaw[0]), float(pitch[0]), float(roll[0]))
        w = _body_rate(float(pitch[0]), float(roll[0]), float(yaw[1]), float(pitch[1]), float(roll[1]))
        return KinematicSample(p, v, a, R, w)

    def state(self, t) -> KFState:
        k = self.sample(t)
        return KFState(k.rotation, k.position, k.velocity)


# ------------------------------------------------------------------ scenario

def make_rig(config: ScenarioConfig) -> StereoRig:
    k1, k2, p1, p2 = config.distortion
    t_left = np.array([0.02, 0.055, 0.01])
    left = CameraCalib(config.fx, config.fy, config.cx, config.cy, k1, k2, p1, p2,
                       baseline=config.baseline, R_bc=R_BC_FORWARD, t_bc=t_left,
                       width=config.width, height=config.height)
    right = CameraCalib(config.fx, config.fy, config.cx, config.cy, k1, k2, p1, p2,
                        baseline=config.baseline, R_bc=R_BC_FORWARD,
                        t_bc=t_left + R_BC_FORWARD @ np.array([config.baseline, 0.0, 0.0]),
                        width=config.width, height=config.height)
    return StereoRig(left, right)


def _landmarks(config: ScenarioConfig, rng):
    n = config.n_landmarks
    d0, d1 = config.landmark_depth
    if config.landmark_layout == "box":
        sy, sz = config.landmark_spread
        return np.column_stack([rng.uniform(d0, d1, n), rng.uniform(-sy, sy, n),
                                rng.uniform(-sz, sz, n)])
    ang = rng.uniform(0, 2 * np.pi, n)
    rad = config.radius + rng.uniform(d0, d1, n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang),
                            rng.uniform(-config.landmark_spread[1], config.landmark_spread[1], n)])


def camera_points(rig_cam: CameraCalib, state: KFState, landmarks):
    """Landmarks (n, 3) expressed in a camera frame."""
    Pb = (landmarks - state.position) @ state.rotation
    return (Pb - rig_cam.t_bc) @ rig_cam.R_bc


@dataclass
class SyntheticScenario:
    config: ScenarioConfig
    trajectory: Trajectory
    imu: list
    frame_timestamps: np.ndarray
    groundtruth: GroundTruth
    landmarks: np.ndarray
    rig: StereoRig
    _frame_cache: dict = field(default_factory=dict, repr=False)

    @property
    def stereo(self):
        return self.config.stereo

    def state_at(self, t_ns) -> KFState:
        return self.trajectory.state(t_ns * 1e-9)

    def frames(self, stereo: Optional[bool] = None, start=0, stop=None):
        """Frame events; images are rendered only when ``config.render`` is set."""
        use_right = self.stereo if stereo is None else stereo
        for t in self.frame_timestamps[start:stop]:
            t = int(t)
            if not self.config.render:
                yield FrameEvent(t, _BLANK, _BLANK if use_right else None)
                continue
            s = self.state_at(t)
            left = Frame(render_view(self.rig.left, s, self.landmarks, self.config.dot_radius))
            right = (Frame(render_view(self.rig.right, s, self.landmarks, self.config.dot_radius))
                     if use_right else None)
            yield FrameEvent(t, left, right)


_BLANK = Frame(np.zeros((4, 4), np.uint8))


def synth_scenario(config: ScenarioConfig) -> SyntheticScenario:
    rng = np.random.default_rng(config.seed)
    traj = Trajectory(config)
    dt_ns = int(round(1e9 / config.imu_rate))
    n = int(round(config.duration * config.imu_rate)) + 1
    ts = np.arange(n, dtype=np.int64) * dt_ns
    g = np.array([0.0, 0.0, -config.gravity])
    sig_g = config.gyro_noise * np.sqrt(config.imu_rate)
    sig_a = config.accel_noise * np.sqrt(config.imu_rate)
    bg = np.array(config.gyro_bias)
    ba = np.array(config.accel_bias)
    noise_g = rng.normal(size=(n, 3)) * sig_g
    noise_a = rng.normal(size=(n, 3)) * sig_a

    imu, pos, quat, vel = [], np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 3))
    for k, t in enumerate(ts):
        s = traj.sample(t * 1e-9)
        if config.imu_sampling == "point":
            omega, force = s.omega_body, s.rotation.T @ (s.acceleration - g)
        else:
            # held constant over [t, t + dt], these reproduce the true rotation and velocity at t + dt
            nxt = traj.sample((t + dt_ns) * 1e-9)
            dt = dt_ns * 1e-9
            omega = so3_log(s.rotation.T @ nxt.rotation) / dt
            force = s.rotation.T @ (nxt.velocity - s.velocity - g * dt) / dt
        gyro = omega + bg + noise_g[k]
        acc = force + ba + noise_a[k]
        imu.append(ImuSample(int(t), gyro, acc))
        pos[k], vel[k], quat[k] = s.position, s.velocity, quat_from_rotation(s.rotation)
    gt = GroundTruth(ts, pos, quat, vel, np.tile(bg, (n, 1)), np.tile(ba, (n, 1)))

    step = int(round(config.imu_rate / config.camera_rate))
    frame_ts = ts[::step]
    landmarks = _landmarks(config, rng)
    rig = make_rig(config)
    ever_visible = False
    for t in frame_ts[:: max(1, len(frame_ts) // 50)]:
        if np.any(camera_points(rig.left, traj.state(t * 1e-9), landmarks)[:, 2] > 0.1):
            ever_visible = True
            break
    if not ever_visible:
        raise DegenerateScenarioError("no landmark is ever in front of the camera")
    return SyntheticScenario(config, traj, imu, frame_ts, gt, landmarks, rig)


# ------------------------------------------------------------------ rendering

BACKGROUND = 24
FOREGROUND = 232


def render_view(camera: CameraCalib, state: KFState, landmarks, radius=2.0):
    """Anti-aliased white dots on a dark background, deterministic."""
    from ..geometry import project

    img = np.full((camera.height, camera.width), float(BACKGROUND))
    P = camera_points(camera, state, landmarks)
    P = P[P[:, 2] > 0.2]
    if len(P) == 0:
        return img.astype(np.uint8)
    px = project(camera, P)
    r = int(np.ceil(radius + 1))
    # nearer dots are drawn last
    for (u, v), z in sorted(zip(px, P[:, 2]), key=lambda a: -a[1]):
        if not (-r <= u < camera.width + r and -r <= v < camera.height + r):
            continue
        x0, y0 = int(np.floor(u)) - r, int(np.floor(v)) - r
        xs = np.arange(x0, x0 + 2 * r + 2)
        ys = np.arange(y0, y0 + 2 * r + 2)
        xx, yy = np.meshgrid(xs, ys)
        cover = np.clip(radius + 0.5 - np.hypot(xx - u, yy - v), 0.0, 1.0)
        ok = (xx >= 0) & (xx < camera.width) & (yy >= 0) & (yy < camera.height)
        cur = img[yy[ok], xx[ok]]
        img[yy[ok], xx[ok]] = cur + (FOREGROUND - cur) * cover[ok]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_scenario_yaml(config: ScenarioConfig, path):
    Path(path).write_text(yaml.safe_dump({"scenario": config.to_dict()}, sort_keys=False))
