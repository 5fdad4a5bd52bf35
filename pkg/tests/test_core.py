import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whed.core import (
    DataError,
    GimbalLockError,
    NumericalError,
    Quaternion,
    RigidTransform,
    Series,
    euler_xyz_from_quat,
    quat_from_euler_xyz,
    slerp,
    wrap_angle,
)


def random_transform(rng) -> RigidTransform:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    q = Quaternion.from_axis_angle(axis, rng.uniform(-math.pi, math.pi))
    return RigidTransform(q, rng.uniform(-2, 2, size=3))


# ------------------------------------------------------------- quaternions


def test_quaternion_normalized_and_canonical():
    q = Quaternion(-2.0, 0.0, 0.0, 2.0)
    assert abs(q.w**2 + q.x**2 + q.y**2 + q.z**2 - 1.0) < 1e-12
    assert q.w >= 0.0  # sign canonicalized


def test_quaternion_zero_norm_rejected():
    with pytest.raises(NumericalError):
        Quaternion(0.0, 0.0, 0.0, 0.0)


@given(st.lists(st.floats(-10, 10), min_size=8, max_size=8))
def test_quaternion_product_stays_unit(vals):
    try:
        a = Quaternion(*vals[:4])
        b = Quaternion(*vals[4:])
    except NumericalError:
        return
    p = a * b
    norm = math.sqrt(p.w**2 + p.x**2 + p.y**2 + p.z**2)
    assert abs(norm - 1.0) < 1e-9


def test_rotation_matrix_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(100):
        axis = rng.normal(size=3)
        q = Quaternion.from_axis_angle(axis, rng.uniform(-math.pi, math.pi))
        q2 = Quaternion.from_rotation_matrix(q.to_rotation_matrix())
        assert q.component_distance(q2) < 1e-12


def test_rotate_matches_matrix():
    rng = np.random.default_rng(3)
    for _ in range(50):
        q = Quaternion.from_axis_angle(rng.normal(size=3), rng.uniform(-3, 3))
        v = rng.normal(size=3)
        assert np.allclose(q.rotate(v), q.to_rotation_matrix() @ v, atol=1e-12)


# ---------------------------------------------------------------- compose


def test_compose_identity_cases():
    eye = RigidTransform.identity()
    assert eye.compose(eye).is_close(eye)

    rng = np.random.default_rng(0)
    for _ in range(50):
        t = random_transform(rng)
        assert t.compose(t.inverse()).is_close(RigidTransform.identity())
        assert t.inverse().compose(t).is_close(RigidTransform.identity())


def test_compose_rotation_translation_example():
    # a = 90 deg about z carrying translation (1,0,0); b = pure translation
    # (1,0,0). The rotated offset lands on y, so the total is (1,1,0).
    a = RigidTransform(Quaternion.from_axis_angle((0, 0, 1), math.pi / 2), [1.0, 0.0, 0.0])
    b = RigidTransform(Quaternion.identity(), [1.0, 0.0, 0.0])
    c = a.compose(b)
    assert np.allclose(c.translation, [1.0, 1.0, 0.0], atol=1e-12)
    assert c.rotation.angle_to(a.rotation) < 1e-12
    # Independent oracle: homogeneous matrix product.
    assert np.allclose(c.to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-12)


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a, b = random_transform(rng), random_transform(rng)
        assert np.allclose(a.compose(b).to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-9)


def test_compose_associative():
    rng = np.random.default_rng(13)
    for _ in range(100):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = a.compose(b).compose(c)
        right = a.compose(b.compose(c))
        assert left.is_close(right, pos_tol=1e-9, rot_tol=1e-9)


def test_inverse_examples():
    eye = RigidTransform.identity()
    assert eye.inverse().is_close(eye)
    t = RigidTransform(Quaternion.identity(), [1.0, 2.0, 3.0])
    assert np.allclose(t.inverse().translation, [-1.0, -2.0, -3.0])


def test_matrix_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        t = random_transform(rng)
        assert RigidTransform.from_matrix(t.to_matrix()).is_close(t)


# ------------------------------------------------------------- wrap_angle


def wrap_by_repeated_shift(x: float) -> float:
    # Oracle: add/subtract full turns until the value lands in range.
    while x >= math.pi:
        x -= 2 * math.pi
    while x < -math.pi:
        x += 2 * math.pi
    return x


def test_wrap_angle_examples():
    assert wrap_angle(0.0) == 0.0
    assert abs(wrap_angle(math.pi + 0.1) - (-math.pi + 0.1)) < 1e-12
    assert abs(wrap_angle(-7 * math.pi / 2) - wrap_by_repeated_shift(-7 * math.pi / 2)) < 1e-12
    assert abs(wrap_angle(-7 * math.pi / 2) - math.pi / 2) < 1e-12


def test_wrap_angle_rejects_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(DataError):
            wrap_angle(bad)


@settings(max_examples=300)
@given(st.floats(-1e6, 1e6))
def test_wrap_angle_properties(x):
    w = wrap_angle(x)
    assert -math.pi <= w < math.pi
    # Exactly idempotent.
    assert wrap_angle(w) == w
    # Differs from the input by a whole number of turns.
    turns = (x - w) / (2 * math.pi)
    assert abs(turns - round(turns)) < 1e-9


def test_wrap_angle_boundary():
    assert wrap_angle(math.pi) == -math.pi
    assert wrap_angle(-math.pi) == -math.pi


# ------------------------------------------------------------------ slerp


def test_slerp_endpoints_and_midpoint():
    q0 = Quaternion.identity()
    q1 = Quaternion.from_axis_angle((0, 0, 1), 1.0)
    assert slerp(q0, q1, 0.0).angle_to(q0) < 1e-12
    assert slerp(q0, q1, 1.0).angle_to(q1) < 1e-12
    mid = slerp(q0, q1, 0.5)
    assert abs(mid.angle_to(q0) - 0.5) < 1e-9  # halfway along the 1 rad rotation


def test_slerp_takes_shorter_arc():
    q0 = Quaternion.from_axis_angle((0, 0, 1), 0.1)
    q1_long = Quaternion(-math.cos(1.0), 0.0, 0.0, -math.sin(1.0))  # -q of 2 rad rotation
    mid = slerp(q0, q1_long, 0.5)
    # The interpolant must stay between the two orientations.
    assert mid.angle_to(q0) <= q0.angle_to(q1_long) + 1e-12


# ------------------------------------------------------------------ euler


def euler_xyz_matrix(ex, ey, ez):
    cx, sx = math.cos(ex), math.sin(ex)
    cy, sy = math.cos(ey), math.sin(ey)
    cz, sz = math.cos(ez), math.sin(ez)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def test_euler_xyz_against_matrix_oracle():
    rng = np.random.default_rng(23)
    for _ in range(200):
        ex, ey, ez = rng.uniform(-math.pi, math.pi, 2)[0], rng.uniform(-1.4, 1.4), rng.uniform(-math.pi, math.pi)
        q = quat_from_euler_xyz(ex, ey, ez)
        assert np.allclose(q.to_rotation_matrix(), euler_xyz_matrix(ex, ey, ez), atol=1e-12)
        rx, ry_, rz = euler_xyz_from_quat(q)
        q2 = quat_from_euler_xyz(rx, ry_, rz)
        assert q.component_distance(q2) < 1e-9


def test_euler_gimbal_lock_raises():
    q = quat_from_euler_xyz(0.3, math.pi / 2, 0.2)
    with pytest.raises(GimbalLockError):
        euler_xyz_from_quat(q)


# ----------------------------------------------------------------- series


def test_series_validation():
    s = Series([0, 1, 2], np.zeros((3, 2)))
    assert len(s) == 3
    with pytest.raises(DataError):
        Series([0, 1, 1], np.zeros((3, 2)))
    with pytest.raises(DataError):
        Series([0, 2, 1], np.zeros((3, 2)))
    with pytest.raises(DataError):
        Series([0, 1], np.zeros((3, 2)))
    assert len(Series([], [])) == 0  # empty series permitted


def test_series_nearest_index_tie_goes_earlier():
    s = Series([0, 10, 20], [0, 1, 2])
    assert s.nearest_index(4) == 0
    assert s.nearest_index(5) == 0  # equidistant: earlier wins
    assert s.nearest_index(6) == 1
    assert s.nearest_index(-100) == 0
    assert s.nearest_index(100) == 2
