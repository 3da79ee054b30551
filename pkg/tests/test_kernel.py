import numpy as np
import pytest

from screwblur import autodiff as ad
from screwblur import liegroup as lg
from screwblur.autodiff import Tensor
from screwblur.autodiff.gradcheck import gradcheck
from screwblur.kernel import BlurKernel, KernelConfig, decode_screw, inv3, sample_times, screw_exp
from screwblur.ode import SolverConfig


def test_sample_times():
    assert sample_times(3) == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        sample_times(1)


def test_screw_exp_matches_liegroup():
    rng = np.random.default_rng(0)
    axes = rng.normal(size=(5, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    thetas = rng.uniform(-2, 2, 5)
    vs = rng.normal(size=(5, 3))
    rot, trans = screw_exp(Tensor(axes), Tensor(thetas), Tensor(vs))
    for i in range(5):
        ref = lg.exp_se3(lg.ScrewAxis(axes[i], thetas[i], vs[i]))
        np.testing.assert_allclose(rot.data[i], ref.rot, atol=1e-12)
        np.testing.assert_allclose(trans.data[i], ref.trans, atol=1e-12)


def test_decode_screw_zero_axis_is_translation():
    raw = np.array([[0.0, 0.0, 0.0, 2.0, 1.0, 2.0, 3.0], [3.0, 0.0, 4.0, 1.0, 0.0, 0.0, 0.0]])
    axis, theta, v = decode_screw(Tensor(raw), 0.5)
    np.testing.assert_array_equal(axis.data[0], 0.0)
    np.testing.assert_allclose(axis.data[1], [0.6, 0.0, 0.8])
    np.testing.assert_allclose(theta.data, [1.0, 0.5])
    rot, trans = screw_exp(axis, theta, v)
    np.testing.assert_array_equal(rot.data[0], np.eye(3))
    np.testing.assert_allclose(trans.data[0], [1.0, 2.0, 3.0])


def test_decode_screw_gradient():
    rng = np.random.default_rng(1)
    raw = rng.normal(size=(3, 7))
    w = rng.normal(size=(3, 3, 3))

    def fn(r):
        rot, trans = screw_exp(*decode_screw(r, 0.3))
        return ad.tsum(rot * w) + ad.tsum(ad.square(trans))

    assert gradcheck(fn, [raw])[0] < 1e-6


def test_inv3():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(4, 3, 3)) + 3 * np.eye(3)
    np.testing.assert_allclose(inv3(Tensor(m)).data, np.linalg.inv(m), atol=1e-12)
    assert gradcheck(lambda x: ad.tsum(ad.sin(inv3(x))), [m])[0] < 1e-6


def _kernel(**kw):
    cfg = KernelConfig(n_poses=kw.pop("n_poses", 5), solver=SolverConfig("dopri5", rtol=1e-5, atol=1e-7), **kw)
    return BlurKernel(3, cfg, seed=kw.get("seed", 0))


def test_rigid_transforms_in_se3():
    k = _kernel()
    for idx in range(3):
        for t in k.rigid_transforms(idx, sample_times(5)):
            ortho, det = t.residuals()
            assert ortho < 1e-10 and det < 1e-10


def test_deform_near_identity_at_init():
    k = _kernel()
    for t in k.deform_transforms(1, sample_times(5)):
        assert np.abs(t.rot - np.eye(3)).max() < 1e-4
        assert np.abs(t.trans).max() < 1e-4


def test_camera_frame_composition():
    """c2w_t = c2w_0 @ rigid(t) @ deform(t); the renderer gets the inverse."""
    k = _kernel()
    base = lg.look_at([0.5, -0.2, -2.0], [0.0, 0.0, 0.0])
    times = sample_times(5)
    poses = k.camera_trajectory(base, 2)
    rig = k.rigid_transforms(2, times)
    dfm = k.deform_transforms(2, times)
    c2w0 = base.inverse().matrix()
    for p, r, d in zip(poses, rig, dfm):
        expect = np.linalg.inv(c2w0 @ r.matrix() @ d.matrix())
        np.testing.assert_allclose(p.matrix(), expect, atol=1e-12)


def test_rigid_only_is_exact_rigid_transform():
    k = _kernel(use_deform=False)
    base = lg.look_at([0.0, 0.0, -3.0], [0.0, 0.0, 0.0])
    for p in k.camera_trajectory(base, 0):
        assert max(p.residuals()) < 1e-10


def test_identity_with_zero_decoders():
    k = _kernel()
    k.zero_decoders()
    base = lg.look_at([1.0, 0.0, -2.0], [0.0, 0.0, 0.0])
    for p in k.camera_trajectory(base, 1):
        np.testing.assert_allclose(p.matrix(), base.matrix(), atol=1e-12)


def test_time_input_flag_changes_dynamics():
    a = _kernel(time_input=False)
    b = _kernel(time_input=True)
    assert a.f.hidden.weight.shape[0] == 64
    assert b.f.hidden.weight.shape[0] == 65
    assert len(b.screws(0, sample_times(3))) == 3


def test_index_check():
    with pytest.raises(IndexError):
        _kernel().rigid_transforms(3, [0.0, 1.0])


def test_state_roundtrip():
    a = _kernel()
    b = BlurKernel(3, a.cfg, seed=99)
    b.load_state(a.state())
    np.testing.assert_array_equal(a.rigid_transforms(0, [0.0, 1.0])[1].rot, b.rigid_transforms(0, [0.0, 1.0])[1].rot)


def test_gradient_reaches_every_group():
    k = _kernel(n_poses=3)
    base = lg.look_at([0.0, 0.0, -3.0], [0.0, 0.0, 0.0])
    rot, trans, drot = k.trajectory_tensors(base.rot, base.trans, 0)
    (ad.tsum(ad.sin(rot)) + ad.tsum(trans) + ad.tsum(drot)).backward()
    for grp, params in k.parameter_groups().items():
        for name, t in params.items():
            assert t.grad is not None and np.abs(t.grad).max() > 0, f"{grp}.{name}"
