"""Factor linearization into the ``H dx = eps`` normal equations.

Residuals are ``prediction - measurement`` and the step solves
``H dx = eps`` with ``H = J^T W J`` and ``eps = -J^T W r``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from ..geometry import (
    BA, BG, POS, STATE_DIM, THETA, VEL, CameraCalib, KFState, hat, right_jacobian,
    right_jacobian_inv, so3_exp, so3_log,
)
from ..ife import ImuNoise, PreintegratedDelta

log = logging.getLogger(__name__)

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class Linearization:
    """Dense contribution over a list of window indices."""

    states: list
    H: np.ndarray
    eps: np.ndarray
    cost: float


# --------------------------------------------------------------------------- IMU

def imu_residual(delta: PreintegratedDelta, si: KFState, sj: KFState, gravity=GRAVITY):
    """15-vector ``(r_R, r_v, r_p, r_bg, r_ba)``."""
    dt = delta.duration
    Ri_t = si.rotation.T
    dR, dv, dp = delta.corrected(si.gyro_bias, si.accel_bias)
    r = np.empty(15)
    r[0:3] = so3_log(dR.T @ Ri_t @ sj.rotation)
    r[3:6] = Ri_t @ (sj.velocity - si.velocity - gravity * dt) - dv
    r[6:9] = Ri_t @ (sj.position - si.position - si.velocity * dt - 0.5 * gravity * dt * dt) - dp
    r[9:12] = sj.gyro_bias - si.gyro_bias
    r[12:15] = sj.accel_bias - si.accel_bias
    return r


def imu_jacobians(delta: PreintegratedDelta, si: KFState, sj: KFState, gravity=GRAVITY):
    """Analytic ``(dr/dx_i, dr/dx_j)``, each 15x15, under the right-perturbation retract."""
    dt = delta.duration
    Ri_t = si.rotation.T
    dbg = si.gyro_bias - delta.gyro_bias
    r = imu_residual(delta, si, sj, gravity)
    rR = r[0:3]
    Jr_inv = right_jacobian_inv(rR)
    Ji = np.zeros((15, 15))
    Jj = np.zeros((15, 15))

    Ji[0:3, THETA] = -Jr_inv @ sj.rotation.T @ si.rotation
    Jj[0:3, THETA] = Jr_inv
    Ji[0:3, BG] = -Jr_inv @ so3_exp(rR).T @ right_jacobian(delta.dR_dbg @ dbg) @ delta.dR_dbg

    v_term = Ri_t @ (sj.velocity - si.velocity - gravity * dt)
    Ji[3:6, THETA] = hat(v_term)
    Ji[3:6, VEL] = -Ri_t
    Jj[3:6, VEL] = Ri_t
    Ji[3:6, BG] = -delta.dv_dbg
    Ji[3:6, BA] = -delta.dv_dba

    p_term = Ri_t @ (sj.position - si.position - si.velocity * dt - 0.5 * gravity * dt * dt)
    Ji[6:9, THETA] = hat(p_term)
    Ji[6:9, POS] = -Ri_t
    Jj[6:9, POS] = Ri_t
    Ji[6:9, VEL] = -Ri_t * dt
    Ji[6:9, BG] = -delta.dp_dbg
    Ji[6:9, BA] = -delta.dp_dba

    Ji[9:12, BG] = -np.eye(3)
    Jj[9:12, BG] = np.eye(3)
    Ji[12:15, BA] = -np.eye(3)
    Jj[12:15, BA] = np.eye(3)
    return Ji, Jj


def imu_information(delta: PreintegratedDelta, noise: ImuNoise = ImuNoise(), regularization=1e-12):
    if not delta.duration > 0:
        raise InvalidArgument("IMU factor with zero duration")
    cov = np.zeros((15, 15))
    cov[:9, :9] = delta.covariance
    cov[9:12, 9:12] = np.eye(3) * noise.gyro_random_walk**2 * delta.duration
    cov[12:15, 12:15] = np.eye(3) * noise.accel_random_walk**2 * delta.duration
    cov = 0.5 * (cov + cov.T)
    w = np.linalg.eigvalsh(cov)
    if w.min() <= regularization * max(w.max(), 1e-300):
        log.warning("IMU covariance near singular (min eig %.3g); regularizing", w.min())
        cov += np.eye(15) * regularization * max(w.max(), 1.0)
    return np.linalg.inv(cov)


def linearize_imu(delta: PreintegratedDelta, si: KFState, sj: KFState, i: int, j: int,
                  noise: ImuNoise = ImuNoise(), gravity=GRAVITY) -> Linearization:
    W = imu_information(delta, noise)
    r = imu_residual(delta, si, sj, gravity)
    Ji, Jj = imu_jacobians(delta, si, sj, gravity)
    J = np.hstack([Ji, Jj])
    JtW = J.T @ W
    H = JtW @ J
    return Linearization([i, j], 0.5 * (H + H.T), -JtW @ r, 0.5 * float(r @ W @ r))


# ------------------------------------------------------------------------ vision

@dataclass(frozen=True)
class VisionModel:
    """Rectified pinhole camera rigidly mounted on the body."""

    camera: CameraCalib
    stereo: bool = True
    pixel_sigma: float = 1.0
    huber: float = 1.345  # in units of sigma
    min_depth: float = 0.05


def camera_point(state: KFState, camera: CameraCalib, landmark):
    """Landmark in the left-camera frame, plus the body-frame point."""
    Pb = state.rotation.T @ (landmark - state.position)
    return camera.R_bc.T @ (Pb - camera.t_bc), Pb


def _obs_predict(Pc, camera: CameraCalib, stereo):
    X, Y, Z = Pc
    u = camera.fx * X / Z + camera.cx
    v = camera.fy * Y / Z + camera.cy
    if not stereo:
        return np.array([u, v])
    ur = camera.fx * (X - camera.baseline) / Z + camera.cx
    return np.array([u, v, ur])


def _obs_jacobian(Pc, camera: CameraCalib, stereo):
    X, Y, Z = Pc
    fx, fy = camera.fx, camera.fy
    rows = [[fx / Z, 0.0, -fx * X / Z**2], [0.0, fy / Z, -fy * Y / Z**2]]
    if stereo:
        rows.append([fx / Z, 0.0, -fx * (X - camera.baseline) / Z**2])
    return np.array(rows)


def _measurement(coords, stereo):
    """Stored coordinates are ``(u_left, v, u_right)``; mono drops the last."""
    c = np.asarray(coords, float)
    return c[:3] if stereo and np.isfinite(c[2]) else c[:2]


def huber_weight(e, k):
    return 1.0 if e <= k else k / e


def huber_cost(e, k):
    return 0.5 * e * e if e <= k else k * (e - 0.5 * k)


def reprojection_terms(landmark, states, coords, model: VisionModel, with_jacobians=True):
    """Per-observation residuals and Jacobians w.r.t. (pose of each state, landmark)."""
    out = []
    cam = model.camera
    for s, c in zip(states, coords):
        z = _measurement(c, model.stereo)
        stereo = len(z) == 3
        Pc, Pb = camera_point(s, cam, landmark)
        if Pc[2] < model.min_depth:
            return None
        r = _obs_predict(Pc, cam, stereo) - z
        if not with_jacobians:
            out.append((r, None, None))
            continue
        Jproj = _obs_jacobian(Pc, cam, stereo)
        dPc_dtheta = cam.R_bc.T @ hat(Pb)
        Rwc_t = cam.R_bc.T @ s.rotation.T
        Jpose = np.hstack([Jproj @ dPc_dtheta, -Jproj @ Rwc_t])
        Jl = Jproj @ Rwc_t
        out.append((r, Jpose, Jl))
    return out


def triangulate_track(states, coords, model: VisionModel, iterations=5):
    """World landmark from a track at the given states; None if degenerate."""
    cam = model.camera
    L = None
    if model.stereo:
        for s, c in zip(states, coords):
            disp = c[0] - c[2]
            if np.isfinite(disp) and disp > 1e-3:
                Z = cam.fx * cam.baseline / disp
                Pc = np.array([(c[0] - cam.cx) * Z / cam.fx, (c[1] - cam.cy) * Z / cam.fy, Z])
                L = s.rotation @ (cam.R_bc @ Pc + cam.t_bc) + s.position
                break
    if L is None:
        # least squares point closest to all viewing rays
        A = np.zeros((3, 3))
        b = np.zeros(3)
        for s, c in zip(states, coords):
            ray = np.array([(c[0] - cam.cx) / cam.fx, (c[1] - cam.cy) / cam.fy, 1.0])
            d = s.rotation @ cam.R_bc @ ray
            d /= np.linalg.norm(d)
            center = s.position + s.rotation @ cam.t_bc
            P = np.eye(3) - np.outer(d, d)
            A += P
            b += P @ center
        w = np.linalg.eigvalsh(A)
        if w[0] < 1e-6 * w[-1]:
            return None
        L = np.linalg.solve(A, b)
    inv_var = 1.0 / model.pixel_sigma**2
    for _ in range(iterations):
        terms = reprojection_terms(L, states, coords, model)
        if terms is None:
            return None
        H = sum(inv_var * Jl.T @ Jl for _, _, Jl in terms)
        g = sum(inv_var * Jl.T @ r for r, _, Jl in terms)
        try:
            step = np.linalg.solve(H + 1e-9 * np.trace(H) * np.eye(3), -g)
        except np.linalg.LinAlgError:
            return None
        L = L + step
        if np.linalg.norm(step) < 1e-12 * (1.0 + np.linalg.norm(L)):
            break
    if reprojection_terms(L, states, coords, model, with_jacobians=False) is None:
        return None
    return L


def vision_system(landmark, states, coords, model: VisionModel):
    """Full normal equations over ``(pose_1 .. pose_k, landmark)``, 6k+3 unknowns."""
    terms = reprojection_terms(landmark, states, coords, model)
    if terms is None:
        return None
    k = len(states)
    n = 6 * k + 3
    H = np.zeros((n, n))
    g = np.zeros(n)
    cost = 0.0
    inv_sigma = 1.0 / model.pixel_sigma
    for idx, (r, Jpose, Jl) in enumerate(terms):
        e = np.linalg.norm(r) * inv_sigma
        w = huber_weight(e, model.huber) * inv_sigma**2
        cost += huber_cost(e, model.huber)
        J = np.zeros((len(r), n))
        J[:, 6 * idx:6 * idx + 6] = Jpose
        J[:, 6 * k:] = Jl
        H += w * J.T @ J
        g += w * J.T @ r
    return H, -g, cost


def schur_eliminate_landmark(H, eps, damping=1e-9):
    """Eliminate the trailing 3 landmark unknowns."""
    Hxx, Hxl, Hll = H[:-3, :-3], H[:-3, -3:], H[-3:, -3:]
    w = np.linalg.eigvalsh(Hll)
    if w[0] <= damping * max(w[-1], 1e-300):
        Hll = Hll + np.eye(3) * damping * max(w[-1], 1.0)
    K = Hxl @ np.linalg.inv(Hll)
    Hs = Hxx - K @ Hxl.T
    return 0.5 * (Hs + Hs.T), eps[:-3] - K @ eps[-3:]


def expand_pose(H6, e6, k):
    """Embed a (6k)-dim pose system into the 15k state ordering."""
    idx = np.concatenate([STATE_DIM * m + np.arange(6) for m in range(k)])
    H = np.zeros((STATE_DIM * k, STATE_DIM * k))
    e = np.zeros(STATE_DIM * k)
    H[np.ix_(idx, idx)] = H6
    e[idx] = e6
    return H, e


def linearize_vision(window_indices, states, coords, model: VisionModel,
                     landmark=None) -> Optional[Linearization]:
    """Structureless factor for one track; ``None`` when the track is skipped."""
    if len(states) < 2:
        return None
    if landmark is None:
        landmark = triangulate_track(states, coords, model)
        if landmark is None:
            log.debug("track skipped: triangulation failed or point behind a camera")
            return None
    system = vision_system(landmark, states, coords, model)
    if system is None:
        log.debug("track skipped: point behind a camera")
        return None
    H, eps, cost = system
    Hs, es = schur_eliminate_landmark(H, eps)
    Hf, ef = expand_pose(Hs, es, len(states))
    return Linearization(list(window_indices), Hf, ef, cost)
