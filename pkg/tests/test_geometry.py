import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfvio.errors import BehindCameraError, InvalidArgument
from kfvio.geometry import (
    CameraCalib, KFState, bearing_vectors, distort_normalized, hat, is_rotation,
    local_coordinates, project, project_jacobian, quat_from_rotation, retract,
    right_jacobian, right_jacobian_inv, rotation_from_quat, so3_exp, so3_log,
    undistort_points,
)

QUARTER_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def exp_series(omega, terms=20):
    """Matrix exponential by truncated power series (test oracle)."""
    K = hat(omega)
    out = np.eye(3)
    term = np.eye(3)
    for k in range(1, terms):
        term = term @ K / k
        out = out + term
    return out


vec3 = st.tuples(*[st.floats(-1.0, 1.0)] * 3).map(np.array)


def test_exp_zero_is_identity():
    np.testing.assert_array_equal(so3_exp(np.zeros(3)), np.eye(3))


def test_exp_quarter_turn():
    np.testing.assert_allclose(so3_exp([0, 0, np.pi / 2]), QUARTER_Z, atol=1e-15)


def test_exp_rejects_nan():
    with pytest.raises(InvalidArgument):
        so3_exp([np.nan, 0, 0])


@settings(max_examples=200, deadline=None)
@given(vec3)
def test_exp_matches_series_and_roundtrips(v):
    n = np.linalg.norm(v)
    omega = v if n < 1e-12 else v / max(n, 1.0) * min(n, 1.0) * (np.pi - 1e-3)
    R = so3_exp(omega)
    np.testing.assert_allclose(R, exp_series(omega, terms=30), atol=1e-12)
    assert is_rotation(R, tol=1e-12)
    np.testing.assert_allclose(so3_log(R), omega, atol=1e-10)
    np.testing.assert_allclose(so3_exp(so3_log(R)), R, atol=1e-10)


def test_small_angle_series_branch():
    w = np.array([3e-9, -1e-9, 2e-9])
    np.testing.assert_allclose(so3_exp(w), exp_series(w), atol=1e-18)
    np.testing.assert_allclose(so3_log(so3_exp(w)), w, rtol=1e-7)


def test_log_identity_and_quarter():
    np.testing.assert_array_equal(so3_log(np.eye(3)), np.zeros(3))
    np.testing.assert_allclose(so3_log(QUARTER_Z), [0, 0, np.pi / 2], atol=1e-15)


def test_log_near_pi():
    rng = np.random.default_rng(3)
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.pi - 1e-6
        R = exp_series(axis * angle, terms=40)
        np.testing.assert_allclose(so3_log(R), axis * angle, atol=1e-8)


def test_log_rejects_non_rotation():
    with pytest.raises(InvalidArgument):
        so3_log(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidArgument):
        so3_log(2 * np.eye(3))


def test_right_jacobian_first_order():
    rng = np.random.default_rng(0)
    for _ in range(20):
        phi = rng.normal(size=3)
        d = rng.normal(size=3) * 1e-6
        lhs = so3_exp(phi + d)
        rhs = so3_exp(phi) @ so3_exp(right_jacobian(phi) @ d)
        np.testing.assert_allclose(lhs, rhs, atol=1e-11)
        np.testing.assert_allclose(right_jacobian(phi) @ right_jacobian_inv(phi), np.eye(3), atol=1e-12)


def test_quaternion_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(50):
        R = so3_exp(rng.normal(size=3))
        q = quat_from_rotation(R)
        assert q[0] >= 0
        np.testing.assert_allclose(rotation_from_quat(q), R, atol=1e-12)


def random_state(rng):
    return KFState(so3_exp(rng.normal(size=3)), rng.normal(size=3), rng.normal(size=3),
                   rng.normal(size=3) * 0.01, rng.normal(size=3) * 0.1)


def test_retract_zero_is_identity():
    x = random_state(np.random.default_rng(2))
    y = retract(x, np.zeros(15))
    np.testing.assert_allclose(y.rotation, x.rotation, atol=1e-15)
    for name in ("position", "velocity", "gyro_bias", "accel_bias"):
        np.testing.assert_array_equal(getattr(y, name), getattr(x, name))


def test_retract_quarter_turn_and_position():
    d = np.zeros(15)
    d[:6] = [0, 0, np.pi / 2, 1, 2, 3]
    y = retract(KFState(), d)
    np.testing.assert_allclose(y.rotation, QUARTER_Z, atol=1e-15)
    np.testing.assert_array_equal(y.position, [1, 2, 3])


def test_retract_inverse_composition():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = random_state(rng)
        d = rng.normal(size=15) * 0.3
        y = retract(x, d)
        # compounded inverse, composed explicitly with exp maps
        back = np.concatenate([so3_log(so3_exp(d[:3]).T), -d[3:]])
        z = retract(y, back)
        np.testing.assert_allclose(z.rotation, x.rotation, atol=1e-9)
        np.testing.assert_allclose(z.position, x.position, atol=1e-9)
        np.testing.assert_allclose(local_coordinates(x, y), d, atol=1e-9)


@pytest.fixture
def euroc_like():
    return CameraCalib(458.654, 457.296, 367.215, 248.375,
                       k1=-0.28340811, k2=0.07395907, p1=0.00019359, p2=1.76187114e-05)


def test_project_optical_axis():
    calib = CameraCalib(458.0, 457.0, 367.0, 248.0)
    np.testing.assert_allclose(project(calib, [0, 0, 1]), [367.0, 248.0])
    np.testing.assert_allclose(project(calib, [1, 0, 1]), [825.0, 248.0])


def test_project_behind_camera():
    with pytest.raises(BehindCameraError):
        project(CameraCalib(1, 1, 0, 0), [0, 0, -1])
    with pytest.raises(BehindCameraError):
        project(CameraCalib(1, 1, 0, 0), [0, 0, 0])


def test_project_distortion_matches_polynomial(euroc_like):
    c = euroc_like
    rng = np.random.default_rng(5)
    for _ in range(50):
        P = np.array([rng.uniform(-1, 1), rng.uniform(-0.6, 0.6), rng.uniform(1, 4)])
        x, y = P[0] / P[2], P[1] / P[2]
        r2 = x * x + y * y
        # term-by-term evaluation of the radial-tangential polynomial
        xd = x + c.k1 * r2 * x + c.k2 * r2 * r2 * x + 2 * c.p1 * x * y + c.p2 * (r2 + 2 * x * x)
        yd = y + c.k1 * r2 * y + c.k2 * r2 * r2 * y + c.p1 * (r2 + 2 * y * y) + 2 * c.p2 * x * y
        expected = [c.fx * xd + c.cx, c.fy * yd + c.cy]
        np.testing.assert_allclose(project(c, P), expected, atol=1e-9)


def test_project_jacobian_finite_difference(euroc_like):
    rng = np.random.default_rng(6)
    for _ in range(20):
        P = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 5)])
        J = project_jacobian(euroc_like, P)
        num = np.zeros((2, 3))
        h = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            num[:, k] = (project(euroc_like, P + e) - project(euroc_like, P - e)) / (2 * h)
        np.testing.assert_allclose(J, num, rtol=1e-5, atol=1e-5)


def test_project_retract_first_order_consistency():
    """Finite differences of project(retract(.)) match the chain-rule Jacobian."""
    calib = CameraCalib(458.0, 457.0, 367.0, 248.0, k1=-0.2, k2=0.05)
    rng = np.random.default_rng(7)
    x = random_state(rng)
    landmark = x.position + x.rotation @ np.array([0.3, -0.2, 3.0])

    def pixel(state):
        return project(calib, state.rotation.T @ (landmark - state.position))

    pb = x.rotation.T @ (landmark - x.position)
    Jp = project_jacobian(calib, pb)
    analytic = np.hstack([Jp @ hat(pb), -Jp @ x.rotation.T])
    num = np.zeros((2, 6))
    h = 1e-6
    for k in range(6):
        d = np.zeros(15)
        d[k] = h
        num[:, k] = (pixel(retract(x, d)) - pixel(retract(x, -d))) / (2 * h)
    np.testing.assert_allclose(analytic, num, rtol=1e-5, atol=1e-5 * np.abs(num).max())


def test_undistort_inverts_distortion(euroc_like):
    rng = np.random.default_rng(8)
    xy = rng.uniform(-0.6, 0.6, size=(100, 2))
    d = distort_normalized(euroc_like, xy)
    px = np.column_stack([euroc_like.fx * d[:, 0] + euroc_like.cx, euroc_like.fy * d[:, 1] + euroc_like.cy])
    np.testing.assert_allclose(undistort_points(euroc_like, px), xy, atol=1e-12)
    b = bearing_vectors(euroc_like, px)
    np.testing.assert_allclose(np.linalg.norm(b, axis=1), 1.0)


def test_calib_validation():
    with pytest.raises(InvalidArgument):
        CameraCalib(0.0, 1.0, 0, 0)
    with pytest.raises(InvalidArgument):
        KFState(rotation=np.eye(3) * 2)
