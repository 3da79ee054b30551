import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screwblur import liegroup as lg
from screwblur.selftest import random_screws, series_exp

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)


def test_exp_matches_series():
    rng = np.random.default_rng(1)
    for s in random_screws(rng, 200):
        oracle = series_exp(lg.twist_matrix(s) * s.angle)
        np.testing.assert_allclose(lg.exp_se3(s).matrix(), oracle, atol=1e-9)


def test_pure_translation_screw():
    s = lg.ScrewAxis.from_raw([0.0, 0.0, 0.0], 2.0, [1.0, -1.0, 0.5])
    t = lg.exp_se3(s)
    np.testing.assert_array_equal(t.rot, np.eye(3))
    np.testing.assert_allclose(t.trans, [2.0, -2.0, 1.0])


def test_zero_angle_is_identity():
    s = lg.ScrewAxis(np.array([0.0, 0.0, 1.0]), 0.0, np.array([1.0, 2.0, 3.0]))
    t = lg.exp_se3(s)
    np.testing.assert_allclose(t.matrix(), np.eye(4), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(vec3, st.floats(-np.pi, np.pi), vec3)
def test_exp_lands_in_se3(axis, angle, trans):
    s = lg.ScrewAxis.from_raw(axis, angle, trans)
    ortho, det = lg.exp_se3(s).residuals()
    assert ortho < 1e-12 and det < 1e-12


@settings(max_examples=60, deadline=None)
@given(vec3, st.floats(0.0, np.pi - 1e-6))
def test_log_inverts_exp(axis, angle):
    if np.linalg.norm(axis) < 1e-3:
        axis = (1.0, 0.0, 0.0)
    a = np.asarray(axis) / np.linalg.norm(axis)
    out_axis, out_angle = lg.log_so3(lg.exp_so3(a, angle))
    np.testing.assert_allclose(out_axis * out_angle, a * angle, atol=1e-6)


def test_log_near_pi():
    a = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    for angle in (np.pi - 1e-9, np.pi):
        axis, out = lg.log_so3(lg.exp_so3(a, angle))
        assert out == pytest.approx(angle, abs=1e-7)
        assert abs(abs(axis @ a) - 1.0) < 1e-7


def test_log_identity():
    axis, angle = lg.log_so3(np.eye(3))
    assert angle == 0.0
    np.testing.assert_array_equal(axis, [1.0, 0.0, 0.0])


def test_log_rejects_non_rotation():
    with pytest.raises(lg.NotARotationError):
        lg.log_so3(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(lg.NotARotationError):
        lg.log_so3(np.eye(3) * 1.1)


def test_compose_and_inverse():
    rng = np.random.default_rng(2)
    a = lg.RigidTransform(lg.random_rotation(rng), rng.normal(size=3))
    b = lg.RigidTransform(lg.random_rotation(rng), rng.normal(size=3))
    np.testing.assert_allclose((a @ b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)
    np.testing.assert_allclose((a @ a.inverse()).matrix(), np.eye(4), atol=1e-12)


def test_interpolate_endpoints_and_midpoint():
    rng = np.random.default_rng(3)
    a = lg.RigidTransform(lg.random_rotation(rng), rng.normal(size=3))
    b = lg.RigidTransform(lg.random_rotation(rng), rng.normal(size=3))
    np.testing.assert_allclose(lg.interpolate(a, b, 0.0).matrix(), a.matrix(), atol=1e-9)
    np.testing.assert_allclose(lg.interpolate(a, b, 1.0).matrix(), b.matrix(), atol=1e-9)
    mid = lg.interpolate(a, b, 0.5)
    d = lg.geodesic_distance(a.rot, b.rot)
    assert lg.geodesic_distance(a.rot, mid.rot) == pytest.approx(d / 2, abs=1e-9)


def test_look_at_points_camera_at_target():
    t = lg.look_at([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    p = t.rot @ np.zeros(3) + t.trans
    assert p[0] == pytest.approx(0.0, abs=1e-12) and p[1] == pytest.approx(0.0, abs=1e-12)
    assert p[2] == pytest.approx(np.sqrt(14.0))
    assert max(t.residuals()) < 1e-12


def test_from_matrix_shape_check():
    with pytest.raises(ValueError):
        lg.RigidTransform.from_matrix(np.eye(3))
