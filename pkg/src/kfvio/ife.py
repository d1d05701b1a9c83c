"""IMU preintegration between keyframes.

The recursion is the standard on-manifold one: per sample, with bias-corrected
rates ``w = gyro - bg`` and ``a = acc - ba``::

    dp <- dp + dv*dt + 0.5*dR*a*dt^2
    dv <- dv + dR*a*dt
    dR <- dR * exp(w*dt)

Covariance is propagated to first order in the order (theta, v, p) and the
bias Jacobians are carried along so that a small bias update can be applied
without re-integrating.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .errors import InsufficientDataError, InvalidArgument
from .geometry import hat, right_jacobian, so3_exp

NS = 1e-9


@dataclass(frozen=True)
class ImuNoise:
    """Continuous-time noise densities. Defaults are the EuRoC ADIS16448 values."""

    gyro_noise_density: float = 1.6968e-4  # rad/s/sqrt(Hz)
    accel_noise_density: float = 2.0e-3  # m/s^2/sqrt(Hz)
    gyro_random_walk: float = 1.9393e-5  # rad/s^2/sqrt(Hz)
    accel_random_walk: float = 3.0e-3  # m/s^3/sqrt(Hz)


@dataclass(frozen=True)
class PreintegratedDelta:
    delta_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    delta_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    duration: float = 0.0
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((9, 9)))
    dR_dbg: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    dv_dbg: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    dv_dba: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    dp_dbg: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    dp_dba: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sample_count: int = 0
    kf_i: Optional[int] = None
    kf_j: Optional[int] = None

    def corrected(self, gyro_bias, accel_bias):
        """First-order bias correction of (dR, dv, dp)."""
        dbg = np.asarray(gyro_bias, float) - self.gyro_bias
        dba = np.asarray(accel_bias, float) - self.accel_bias
        dR = self.delta_rotation @ so3_exp(self.dR_dbg @ dbg)
        dv = self.delta_velocity + self.dv_dbg @ dbg + self.dv_dba @ dba
        dp = self.delta_position + self.dp_dbg @ dbg + self.dp_dba @ dba
        return dR, dv, dp


def integrate_sample(acc: PreintegratedDelta, gyro, accel, dt, noise: ImuNoise = ImuNoise()):
    """One Euler step of the preintegration recursion; returns a new delta."""
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    gyro = np.asarray(gyro, float)
    accel = np.asarray(accel, float)
    if not (np.all(np.isfinite(gyro)) and np.all(np.isfinite(accel))):
        raise InvalidArgument("IMU sample has non-finite values")
    w = gyro - acc.gyro_bias
    a = accel - acc.accel_bias
    R = acc.delta_rotation
    dR_step = so3_exp(w * dt)
    Jr = right_jacobian(w * dt)
    a_hat = hat(a)
    Ra_hat = R @ a_hat
    dt2 = dt * dt

    # bias Jacobians use the pre-update dR and Jacobians
    dp_dba = acc.dp_dba + acc.dv_dba * dt - 0.5 * R * dt2
    dp_dbg = acc.dp_dbg + acc.dv_dbg * dt - 0.5 * Ra_hat @ acc.dR_dbg * dt2
    dv_dba = acc.dv_dba - R * dt
    dv_dbg = acc.dv_dbg - Ra_hat @ acc.dR_dbg * dt
    dR_dbg = dR_step.T @ acc.dR_dbg - Jr * dt

    A = np.eye(9)
    A[0:3, 0:3] = dR_step.T
    A[3:6, 0:3] = -Ra_hat * dt
    A[6:9, 0:3] = -0.5 * Ra_hat * dt2
    A[6:9, 3:6] = np.eye(3) * dt
    Bg = np.zeros((9, 3))
    Bg[0:3] = Jr * dt
    Ba = np.zeros((9, 3))
    Ba[3:6] = R * dt
    Ba[6:9] = 0.5 * R * dt2
    qg = noise.gyro_noise_density**2 / dt
    qa = noise.accel_noise_density**2 / dt
    cov = A @ acc.covariance @ A.T + qg * (Bg @ Bg.T) + qa * (Ba @ Ba.T)
    cov = 0.5 * (cov + cov.T)

    return replace(
        acc,
        delta_position=acc.delta_position + acc.delta_velocity * dt + 0.5 * (R @ a) * dt2,
        delta_velocity=acc.delta_velocity + (R @ a) * dt,
        delta_rotation=R @ dR_step,
        duration=acc.duration + dt,
        covariance=cov,
        dR_dbg=dR_dbg, dv_dbg=dv_dbg, dv_dba=dv_dba, dp_dbg=dp_dbg, dp_dba=dp_dba,
        sample_count=acc.sample_count + 1,
    )


def imu_intervals(samples, t_start: int, t_end: int):
    """Zero-order-hold pieces ``(sample, dt_seconds)`` covering ``[t_start, t_end]``.

    Sample ``k`` is held from its own timestamp to the next sample's; the first
    sample at or before ``t_start`` covers the leading gap.
    """
    samples = list(samples)
    if not samples or t_end <= t_start:
        return []
    ts = [s.timestamp for s in samples]
    out = []
    for k, s in enumerate(samples):
        lo = s.timestamp if k > 0 else min(s.timestamp, t_start)
        hi = ts[k + 1] if k + 1 < len(samples) else max(t_end, s.timestamp)
        lo, hi = max(lo, t_start), min(hi, t_end)
        if hi > lo:
            out.append((s, (hi - lo) * NS))
    return out


class Preintegrator:
    """Single-owner accumulator between two keyframes."""

    def __init__(self, gyro_bias=None, accel_bias=None, noise: ImuNoise = ImuNoise()):
        self.noise = noise
        self.reset(gyro_bias, accel_bias)

    def reset(self, gyro_bias=None, accel_bias=None):
        bg = np.zeros(3) if gyro_bias is None else np.asarray(gyro_bias, float).copy()
        ba = np.zeros(3) if accel_bias is None else np.asarray(accel_bias, float).copy()
        self._acc = PreintegratedDelta(gyro_bias=bg, accel_bias=ba)

    @property
    def current(self) -> PreintegratedDelta:
        return self._acc

    def integrate(self, sample, dt):
        self._acc = integrate_sample(self._acc, sample.angular_velocity,
                                     sample.linear_acceleration, dt, self.noise)

    def integrate_span(self, samples, t_start, t_end):
        for s, dt in imu_intervals(samples, t_start, t_end):
            self.integrate(s, dt)

    def finalize(self, kf_i=None, kf_j=None) -> PreintegratedDelta:
        if self._acc.sample_count == 0:
            raise InsufficientDataError("no IMU samples were integrated since the last keyframe")
        out = replace(self._acc, kf_i=kf_i, kf_j=kf_j)
        self.reset(out.gyro_bias, out.accel_bias)
        return out


def preintegrate(samples, t_start, t_end, gyro_bias=None, accel_bias=None,
                 noise: ImuNoise = ImuNoise()) -> PreintegratedDelta:
    p = Preintegrator(gyro_bias, accel_bias, noise)
    p.integrate_span(samples, t_start, t_end)
    return p.finalize()


def gyro_delta_rotation(samples: Iterable, t_start=None, t_end=None, gyro_bias=None):
    """Bias-corrected rotation-only integration, ``R_start_from_end`` in the body frame."""
    samples = list(samples)
    if not samples:
        raise InsufficientDataError("need at least one IMU sample")
    bg = np.zeros(3) if gyro_bias is None else np.asarray(gyro_bias, float)
    if t_start is None:
        t_start = samples[0].timestamp
    if t_end is None:
        t_end = samples[-1].timestamp
    R = np.eye(3)
    for s, dt in imu_intervals(samples, t_start, t_end):
        R = R @ so3_exp((s.angular_velocity - bg) * dt)
    return R
