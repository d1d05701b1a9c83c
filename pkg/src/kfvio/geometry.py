"""Rotation algebra, keyframe state, camera model and the manifold retract.

Conventions
-----------
* Rotations are 3x3 matrices. ``R_wb`` maps body vectors into the world frame.
* Tangent vectors of a keyframe state are ordered ``(dtheta, dp, dv, dbg, dba)``.
* Rotation increments are applied on the right, ``R <- R @ exp(dtheta)``;
  position, velocity and biases are additive in the world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BehindCameraError, InvalidArgument

SMALL_ANGLE = 1e-8
ORTHO_TOL = 1e-6

# tangent layout of one keyframe state
THETA = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
POSE = slice(0, 6)
STATE_DIM = 15


def hat(v):
    """Skew-symmetric matrix so that ``hat(a) @ b == cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _check_vec3(v, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise InvalidArgument(f"{name} must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument(f"{name} has non-finite components")
    return a


def so3_exp(omega):
    """Rodrigues' formula. Uses a second-order series for tiny angles."""
    w = _check_vec3(omega, "omega")
    theta = np.linalg.norm(w)
    K = hat(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


def is_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def so3_log(R):
    """Inverse of :func:`so3_exp`; returns a rotation vector with norm <= pi."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R):
        raise InvalidArgument("so3_log expects an orthonormal matrix with det +1")
    skew = vee(R - R.T)  # = 2 sin(theta) * axis
    s = 0.5 * np.linalg.norm(skew)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta < SMALL_ANGLE:
        return (0.5 + theta**2 / 12.0) * skew
    if theta < np.pi - 1e-3:
        return theta / (2.0 * np.sin(theta)) * skew
    # near pi the skew part vanishes; read the axis from the symmetric part
    B = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    if axis @ skew < 0:
        axis = -axis
    return theta * axis


def right_jacobian(phi):
    """Right Jacobian of SO(3): exp(phi + d) ~= exp(phi) exp(Jr(phi) d)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * K + (K @ K) / 6.0
    return (np.eye(3) - (1.0 - np.cos(theta)) / theta**2 * K
            + (theta - np.sin(theta)) / theta**3 * (K @ K))


def right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * K + (K @ K) / 12.0
    coef = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * K + coef * (K @ K)


def normalize_rotation(R):
    """Project onto SO(3) with an SVD."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def quat_from_rotation(R):
    """Hamilton quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def rotation_from_quat(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class KFState:
    """Keyframe state: world-from-body rotation, position, velocity, IMU biases."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        if not is_rotation(R):
            raise InvalidArgument("KFState.rotation is not a rotation matrix")
        object.__setattr__(self, "rotation", R)
        for name in ("position", "velocity", "gyro_bias", "accel_bias"):
            object.__setattr__(self, name, _check_vec3(getattr(self, name), name).copy())

    def with_(self, **changes):
        return replace(self, **changes)


def retract(state: KFState, delta) -> KFState:
    """Apply a 15-dim tangent increment ``(dtheta, dp, dv, dbg, dba)``."""
    d = np.asarray(delta, dtype=float)
    if d.shape != (STATE_DIM,) or not np.all(np.isfinite(d)):
        raise InvalidArgument("retract expects a finite 15-vector")
    return KFState(
        rotation=normalize_rotation(state.rotation @ so3_exp(d[THETA])),
        position=state.position + d[POS],
        velocity=state.velocity + d[VEL],
        gyro_bias=state.gyro_bias + d[BG],
        accel_bias=state.accel_bias + d[BA],
    )


def local_coordinates(base: KFState, other: KFState):
    """Tangent vector ``d`` such that ``retract(base, d) == other``."""
    d = np.empty(STATE_DIM)
    d[THETA] = so3_log(base.rotation.T @ other.rotation)
    d[POS] = other.position - base.position
    d[VEL] = other.velocity - base.velocity
    d[BG] = other.gyro_bias - base.gyro_bias
    d[BA] = other.accel_bias - base.accel_bias
    return d


@dataclass(frozen=True)
class CameraCalib:
    """Pinhole camera with radial-tangential distortion.

    ``R_bc``/``t_bc`` give the camera pose in the body (IMU) frame. ``baseline``
    is only meaningful for a rectified stereo model, where the right camera
    sits ``baseline`` metres along the left camera's +x axis.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    baseline: float = 0.0
    R_bc: np.ndarray = field(default_factory=lambda: np.eye(3))
    t_bc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int = 752
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgument("focal lengths must be positive")
        if self.baseline < 0:
            raise InvalidArgument("baseline must be non-negative")
        R = np.array(self.R_bc, dtype=float)
        if not is_rotation(R):
            raise InvalidArgument("R_bc is not a rotation")
        object.__setattr__(self, "R_bc", R)
        object.__setattr__(self, "t_bc", _check_vec3(self.t_bc, "t_bc").copy())

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def distortion(self):
        return np.array([self.k1, self.k2, self.p1, self.p2])

    @property
    def has_distortion(self):
        return bool(np.any(self.distortion != 0.0))

    def pinhole(self, **changes):
        """Same intrinsics without distortion."""
        return replace(self, k1=0.0, k2=0.0, p1=0.0, p2=0.0, **changes)


def distort_normalized(calib: CameraCalib, xy):
    """Radial-tangential distortion of normalized image coordinates (..., 2)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + calib.k1 * r2 + calib.k2 * r2 * r2
    xd = x * radial + 2.0 * calib.p1 * x * y + calib.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + calib.p1 * (r2 + 2.0 * y * y) + 2.0 * calib.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def _distortion_jacobian(calib, x, y):
    r2 = x * x + y * y
    radial = 1.0 + calib.k1 * r2 + calib.k2 * r2 * r2
    drad = 2.0 * calib.k1 + 4.0 * calib.k2 * r2  # d radial / d(r2) * 2
    p1, p2 = calib.p1, calib.p2
    dxd_dx = radial + x * drad * x + 2.0 * p1 * y + 6.0 * p2 * x
    dxd_dy = x * drad * y + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dx = y * drad * x + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dy = radial + y * drad * y + 6.0 * p1 * y + 2.0 * p2 * x
    return np.array([[dxd_dx, dxd_dy], [dyd_dx, dyd_dy]])


def project(calib: CameraCalib, point_cam):
    """Pixel coordinates of a camera-frame point (or an (n, 3) array of them)."""
    p = np.asarray(point_cam, dtype=float)
    if p.shape[-1] != 3:
        raise InvalidArgument("point_cam must have 3 components")
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("point at or behind the camera plane")
    xy = p[..., :2] / z[..., None]
    d = distort_normalized(calib, xy)
    return np.stack([calib.fx * d[..., 0] + calib.cx, calib.fy * d[..., 1] + calib.cy], axis=-1)


def project_jacobian(calib: CameraCalib, point_cam):
    """2x3 derivative of :func:`project` with respect to the camera-frame point."""
    X, Y, Z = _check_vec3(point_cam, "point_cam")
    if Z <= 0:
        raise BehindCameraError("point at or behind the camera plane")
    x, y = X / Z, Y / Z
    dn = np.array([[1.0 / Z, 0.0, -X / Z**2], [0.0, 1.0 / Z, -Y / Z**2]])
    dd = _distortion_jacobian(calib, x, y)
    return np.diag([calib.fx, calib.fy]) @ dd @ dn


def undistort_points(calib: CameraCalib, pixels, iterations=20):
    """Normalized, undistorted coordinates (n, 2) of distorted pixels (n, 2)."""
    px = np.atleast_2d(np.asarray(pixels, dtype=float))
    target = np.stack([(px[:, 0] - calib.cx) / calib.fx, (px[:, 1] - calib.cy) / calib.fy], axis=1)
    if not calib.has_distortion:
        return target
    xy = target.copy()
    for _ in range(iterations):
        err = distort_normalized(calib, xy) - target
        if np.abs(err).max() < 1e-14:
            break
        J = _distortion_jacobian(calib, xy[:, 0], xy[:, 1])  # (2, 2, n)
        J = np.moveaxis(J, -1, 0)
        xy = xy - np.linalg.solve(J, err[..., None])[..., 0]
    return xy


def bearing_vectors(calib: CameraCalib, pixels):
    """Unit rays in the camera frame for distorted pixel coordinates."""
    xy = undistort_points(calib, pixels)
    rays = np.column_stack([xy, np.ones(len(xy))])
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


@dataclass(frozen=True)
class StereoRig:
    """Two calibrated cameras sharing a body frame (each carries its own R_bc, t_bc)."""

    left: CameraCalib
    right: CameraCalib

    def right_from_left(self):
        """``(R, t)`` mapping left-camera coordinates into the right camera."""
        R = self.right.R_bc.T @ self.left.R_bc
        t = self.right.R_bc.T @ (self.left.t_bc - self.right.t_bc)
        return R, t

    @property
    def baseline(self):
        return float(np.linalg.norm(self.left.t_bc - self.right.t_bc))
