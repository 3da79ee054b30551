import numpy as np
import pytest

from screwblur import autodiff as ad
from screwblur.autodiff import ShapeError, Tensor
from screwblur.autodiff.gradcheck import gradcheck
from screwblur.compositor import WeightCnn, composite


def frames(n=4, h=6, w=5, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, h, w, 3))


def test_weights_sum_to_one():
    cnn = WeightCnn(seed=1)
    out, weights = composite(Tensor(frames()), cnn, active=True)
    np.testing.assert_allclose(weights.data.sum(axis=0), 1.0, atol=1e-12)
    assert (weights.data > 0).all()
    assert out.shape == (6, 5, 3)


def test_inactive_is_mean():
    f = frames()
    out, weights = composite([Tensor(x) for x in f], WeightCnn(), active=False)
    np.testing.assert_allclose(out.data, f.mean(axis=0), atol=1e-15)
    np.testing.assert_allclose(weights.data, 0.25)


def test_identical_frames_pass_through():
    f = np.broadcast_to(frames(1), (3, 6, 5, 3)).copy()
    out, _ = composite(Tensor(f), WeightCnn(seed=2), active=True)
    np.testing.assert_allclose(out.data, f[0], atol=1e-12)


def test_kaiming_init_and_zero_bias():
    cnn = WeightCnn(seed=3)
    for w in cnn.weights:
        bound = np.sqrt(6.0 / (w.shape[0] * w.shape[1] * w.shape[2]))
        assert np.abs(w.data).max() <= bound
        assert np.abs(w.data).max() > 0.9 * bound
    for b in cnn.biases:
        assert not b.data.any()
    assert [w.shape[-1] for w in cnn.weights] == [64, 64, 3]


def test_shape_errors():
    with pytest.raises(ShapeError):
        composite([Tensor(np.zeros((4, 4, 3))), Tensor(np.zeros((4, 5, 3)))], None)
    with pytest.raises(ShapeError):
        composite(Tensor(np.zeros((2, 4, 4))), None)


def test_gradient_through_cnn():
    cnn = WeightCnn(channels=4, seed=4)
    f = frames(3, 4, 4)
    target = np.random.default_rng(5).uniform(size=(4, 4, 3))
    ws = [p.data.copy() for p in cnn.parameters().values()]
    names = list(cnn.parameters())

    def fn(x, *params):
        for n, p in zip(names, params):
            setattr_param(cnn, n, p)
        out, _ = composite(x, cnn)
        return ad.tsum(ad.square(out - target))

    errs = gradcheck(fn, [f, *ws])
    # the last bias shifts every frame equally, so the softmax cancels it
    assert max(errs[:-1]) < 1e-6
    cnn_b = WeightCnn(channels=4, seed=4)
    out, _ = composite(Tensor(f), cnn_b)
    ad.tsum(ad.square(out - target)).backward()
    assert np.abs(cnn_b.biases[-1].grad).max() < 1e-12


def setattr_param(cnn, name, tensor):
    layer, kind = name.split(".")
    idx = int(layer[len("conv"):])
    (cnn.weights if kind == "weight" else cnn.biases)[idx] = tensor


def test_state_roundtrip():
    a, b = WeightCnn(seed=1), WeightCnn(seed=2)
    b.load_state(a.state())
    f = Tensor(frames())
    np.testing.assert_array_equal(composite(f, a)[0].data, composite(f, b)[0].data)
