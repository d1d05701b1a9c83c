import numpy as np
import pytest

from kfvio.dataset import ImuSample
from kfvio.errors import InsufficientDataError, InvalidArgument
from kfvio.geometry import so3_exp, so3_log
from kfvio.ife import (
    PreintegratedDelta, Preintegrator, gyro_delta_rotation, imu_intervals, integrate_sample,
    preintegrate,
)

DT_NS = 5_000_000  # 200 Hz


def stream(n, gyro, accel, t0=0):
    return [ImuSample(t0 + k * DT_NS, gyro(k), accel(k)) for k in range(n)]


def wavy_stream(n, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(4, 3))
    return stream(n,
                  lambda k: 0.5 * c[0] * np.sin(0.03 * k) + 0.2 * c[1],
                  lambda k: c[2] * np.cos(0.02 * k) + c[3] + [0, 0, 9.81])


def compose(a, b):
    """Algebraic composition of two consecutive deltas (test oracle)."""
    R = a.delta_rotation @ b.delta_rotation
    v = a.delta_velocity + a.delta_rotation @ b.delta_velocity
    p = a.delta_position + a.delta_velocity * b.duration + a.delta_rotation @ b.delta_position
    return R, v, p


def test_zero_motion_stays_identity():
    d = preintegrate(stream(50, lambda k: np.zeros(3), lambda k: np.zeros(3)), 0, 49 * DT_NS)
    np.testing.assert_array_equal(d.delta_rotation, np.eye(3))
    np.testing.assert_array_equal(d.delta_velocity, np.zeros(3))
    np.testing.assert_array_equal(d.delta_position, np.zeros(3))


def test_constant_rate_rotation():
    samples = stream(401, lambda k: np.array([0, 0, 0.5]), lambda k: np.zeros(3))
    d = preintegrate(samples, 0, 400 * DT_NS)
    assert d.duration == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(d.delta_rotation, so3_exp([0, 0, 1.0]), atol=1e-6)


def test_constant_acceleration():
    samples = stream(201, lambda k: np.zeros(3), lambda k: np.array([1.0, 0, 0]))
    d = preintegrate(samples, 0, 200 * DT_NS)
    np.testing.assert_allclose(d.delta_velocity, [1, 0, 0], atol=1e-9)
    np.testing.assert_allclose(d.delta_position, [0.5, 0, 0], atol=1e-9)


def test_integrate_rejects_bad_dt():
    with pytest.raises(InvalidArgument):
        integrate_sample(PreintegratedDelta(), np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(InvalidArgument):
        integrate_sample(PreintegratedDelta(), [np.nan, 0, 0], np.zeros(3), 0.005)


def test_finalize_single_sample_and_reset():
    s = ImuSample(0, [0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
    p = Preintegrator()
    p.integrate(s, 0.005)
    out = p.finalize(3, 4)
    ref = integrate_sample(PreintegratedDelta(), s.angular_velocity, s.linear_acceleration, 0.005)
    np.testing.assert_array_equal(out.delta_rotation, ref.delta_rotation)
    np.testing.assert_array_equal(out.covariance, ref.covariance)
    assert (out.kf_i, out.kf_j) == (3, 4)
    with pytest.raises(InsufficientDataError):
        p.finalize()


@pytest.mark.parametrize("split", [37, 100, 163])
def test_composition(split):
    samples = wavy_stream(201)
    # Euler steps compose exactly when the split falls on a sample timestamp
    t_k = split * DT_NS
    whole = preintegrate(samples, 0, 200 * DT_NS)
    a = preintegrate(samples, 0, t_k)
    b = preintegrate(samples, t_k, 200 * DT_NS)
    R, v, p = compose(a, b)
    np.testing.assert_allclose(R, whole.delta_rotation, atol=1e-9)
    np.testing.assert_allclose(v, whole.delta_velocity, atol=1e-9)
    np.testing.assert_allclose(p, whole.delta_position, atol=1e-9)
    assert a.duration + b.duration == pytest.approx(whole.duration, abs=1e-12)


def test_duration_matches_keyframe_gap():
    # KFs every frame at 20 fps: 10 IMU samples per gap, 200 samples over 20 gaps
    samples = wavy_stream(201)
    for j in range(20):
        d = preintegrate(samples, j * 50_000_000, (j + 1) * 50_000_000)
        assert abs(d.duration - 0.05) <= DT_NS * 1e-9


def test_bias_jacobians_finite_difference():
    samples = wavy_stream(200, seed=3)
    t1 = 199 * DT_NS
    bg0 = np.array([0.01, -0.02, 0.015])
    ba0 = np.array([0.1, 0.05, -0.08])
    nominal = preintegrate(samples, 0, t1, bg0, ba0)
    rng = np.random.default_rng(1)
    for which in ("g", "a"):
        for _ in range(3):
            step = rng.normal(size=3)
            step *= 1e-4 / np.linalg.norm(step)
            bg = bg0 + step if which == "g" else bg0
            ba = ba0 + step if which == "a" else ba0
            redone = preintegrate(samples, 0, t1, bg, ba)
            R, v, p = nominal.corrected(bg, ba)
            pairs = [
                (so3_log(nominal.delta_rotation.T @ redone.delta_rotation),
                 so3_log(nominal.delta_rotation.T @ R)),
                (redone.delta_velocity - nominal.delta_velocity, v - nominal.delta_velocity),
                (redone.delta_position - nominal.delta_position, p - nominal.delta_position),
            ]
            for true_change, predicted in pairs:
                if which == "a" and np.linalg.norm(true_change) < 1e-12:
                    continue  # rotation does not depend on accel bias
                rel = np.linalg.norm(predicted - true_change) / np.linalg.norm(true_change)
                assert rel < 1e-3


def test_covariance_trace_monotone_and_psd():
    p = Preintegrator()
    last = 0.0
    for s, dt in imu_intervals(wavy_stream(100), 0, 99 * DT_NS):
        p.integrate(s, dt)
        cov = p.current.covariance
        tr = np.trace(cov)
        assert tr > last
        last = tr
        np.testing.assert_array_equal(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() > -1e-18


def test_gyro_delta_rotation():
    z = stream(21, lambda k: np.zeros(3), lambda k: np.zeros(3))
    np.testing.assert_array_equal(gyro_delta_rotation(z), np.eye(3))
    w = np.array([0, 0, 0.7])
    c = stream(21, lambda k: w, lambda k: np.zeros(3))
    np.testing.assert_allclose(gyro_delta_rotation(c), so3_exp(w * 0.1), atol=1e-9)
    samples = wavy_stream(60)
    bg = np.array([0.01, 0.0, -0.01])
    full = preintegrate(samples, 0, 59 * DT_NS, gyro_bias=bg)
    np.testing.assert_allclose(gyro_delta_rotation(samples, gyro_bias=bg), full.delta_rotation,
                               atol=1e-9)
    with pytest.raises(InsufficientDataError):
        gyro_delta_rotation([])
