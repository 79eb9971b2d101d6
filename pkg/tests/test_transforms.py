import numpy as np
import pytest

from kinema.transforms import (RigidTransform, pose_error, quat_from_axis_angle,
                               quat_log, quat_multiply, quat_normalize)


def random_transform(rng):
    q = quat_normalize(rng.normal(size=4))
    return RigidTransform(q, rng.normal(size=3))


def test_identity_apply():
    t = RigidTransform.identity()
    p = np.array([1.0, 2.0, 3.0])
    assert np.allclose(t.apply(p), p)


def test_compose_associative(rng):
    a, b, c = (random_transform(rng) for _ in range(3))
    lhs = (a @ b) @ c
    rhs = a @ (b @ c)
    assert lhs.is_close(rhs, tol=1e-12)


def test_inverse_compose_identity(rng):
    for _ in range(20):
        t = random_transform(rng)
        assert (t.inverse() @ t).is_close(RigidTransform.identity(), tol=1e-9)


def test_matrix_round_trip(rng):
    for _ in range(20):
        t = random_transform(rng)
        back = RigidTransform.from_matrix(t.to_matrix())
        assert t.is_close(back, tol=1e-12)


def test_apply_matches_matrix(rng):
    t = random_transform(rng)
    pts = rng.normal(size=(50, 3))
    m = t.to_matrix()
    expected = pts @ m[:3, :3].T + m[:3, 3]
    assert np.allclose(t.apply(pts), expected, atol=1e-12)


def test_axis_angle_quarter_turn():
    t = RigidTransform.from_axis_angle([0, 0, 1], np.pi / 2)
    assert np.allclose(t.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)


def test_rpy_matches_sequential_rotations():
    rpy = (0.3, -0.4, 0.9)
    t = RigidTransform.from_rpy(rpy)
    qx = quat_from_axis_angle([1, 0, 0], rpy[0])
    qy = quat_from_axis_angle([0, 1, 0], rpy[1])
    qz = quat_from_axis_angle([0, 0, 1], rpy[2])
    expected = RigidTransform(quat_multiply(qz, quat_multiply(qy, qx)))
    assert t.is_close(expected, tol=1e-15)


def test_quat_log_recovers_axis_angle():
    for angle in (1e-8, 0.1, 1.0, 3.0):
        q = quat_from_axis_angle([0, 1, 0], angle)
        log = quat_log(q)
        assert np.allclose(log, [0.0, angle, 0.0], atol=1e-9)


def test_quat_log_short_arc():
    # angles > pi come back as the equivalent short rotation
    q = quat_from_axis_angle([0, 0, 1], 2 * np.pi - 0.2)
    assert np.allclose(quat_log(q), [0, 0, -0.2], atol=1e-9)


def test_pose_error_zero_for_identical(rng):
    t = random_transform(rng)
    dt, dr = pose_error(t, t)
    assert np.linalg.norm(dt) < 1e-12
    assert np.linalg.norm(dr) < 1e-9


def test_json_round_trip(rng):
    t = random_transform(rng)
    assert t.is_close(RigidTransform.from_json(t.to_json()), tol=1e-15)


def test_nonunit_quaternion_normalized():
    t = RigidTransform(np.array([2.0, 0.0, 0.0, 0.0]), np.zeros(3))
    assert np.allclose(np.linalg.norm(t.rotation), 1.0)
