import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from screwblur import autodiff as ad
from screwblur.autodiff import Adam, GraphConsumedError, NonFiniteGradientError, ParamGroup, ShapeError, Tensor
from screwblur.autodiff.gradcheck import gradcheck
from screwblur.autodiff.optim import AdamState, adam_step, constant, exponential_decay
from screwblur.selftest import primitive_cases

CASES = primitive_cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients(name):
    fn, arrays = CASES[name]
    assert max(gradcheck(fn, arrays)) < 1e-6


elems = st.floats(-2.0, 2.0, allow_nan=False, width=64)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float64, (3, 2), elements=elems), hnp.arrays(np.float64, (2, 4), elements=elems))
def test_matmul_softmax_chain_property(a, b):
    fn = lambda x, y: ad.tsum(ad.softmax(x @ y, axis=1) * ad.cos(x @ y))
    assert max(gradcheck(fn, [a, b], floor=1e-3)) < 1e-5


def naive_conv(x, w, b=None):
    kh, kw, cin, cout = w.shape
    bsz, h, wd, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((bsz, h, wd, cout))
    for i in range(h):
        for j in range(wd):
            patch = xp[:, i : i + kh, j : j + kw, :]
            out[:, i, j, :] = np.einsum("bhwc,hwco->bo", patch, w)
    return out if b is None else out + b


@pytest.mark.parametrize(
    "cin,cout,k",
    [(3, 64, 3), (64, 64, 3), (64, 3, 3), (2, 5, 1), (4, 4, 5)],
)
def test_conv_matches_naive(cin, cout, k):
    rng = np.random.default_rng(cin * 100 + cout)
    x = rng.normal(size=(2, 7, 6, cin))
    w = rng.normal(size=(k, k, cin, cout))
    b = rng.normal(size=cout)
    np.testing.assert_allclose(ad.conv2d(Tensor(x), Tensor(w), Tensor(b)).data, naive_conv(x, w, b), atol=1e-10)


def test_conv_shape_errors():
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.zeros((1, 4, 4, 3))), Tensor(np.zeros((3, 3, 2, 1))))
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.zeros((1, 4, 4, 3))), Tensor(np.zeros((2, 2, 3, 1))))
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.zeros((4, 4, 3))), Tensor(np.zeros((3, 3, 3, 1))))


def test_broadcast_shape_error():
    with pytest.raises(ShapeError):
        Tensor(np.zeros(3)) + Tensor(np.zeros(4))


def test_backward_needs_scalar():
    with pytest.raises(ShapeError):
        (Tensor(np.ones(3), requires_grad=True) * 2.0).backward()


def test_graph_consumed():
    a = Tensor(np.ones(3), requires_grad=True)
    loss = ad.tsum(a * a)
    loss.backward()
    with pytest.raises(GraphConsumedError):
        loss.backward()


def test_gradients_accumulate_on_leaves():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    ad.tsum(a * 3.0).backward()
    ad.tsum(a * 3.0).backward()
    np.testing.assert_allclose(a.grad, [6.0, 6.0])


def test_no_grad_records_nothing():
    a = Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        out = a * 2.0
    assert out.is_leaf
    assert ad.grad_enabled()


def test_sqrt_gradient_at_zero_is_zero():
    a = Tensor(np.zeros(2), requires_grad=True)
    ad.tsum(ad.sqrt(a)).backward()
    np.testing.assert_array_equal(a.grad, [0.0, 0.0])


def test_float32_preserved():
    a = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    out = ad.tsum(ad.exp(a @ a) * 2.0)
    assert out.dtype == np.float32
    out.backward()
    assert a.grad.dtype == np.float32


# -- optimiser -------------------------------------------------------------
def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([1.0, -1.0, 5.0])}
    adam_step(p, {"w": np.array([0.3, -2.0, 1e3])}, {}, 0.1)
    np.testing.assert_allclose(p["w"], [0.9, -0.9, 4.9], atol=1e-6)


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(0)
    p = {"w": rng.normal(size=4)}
    ref = p["w"].copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = {}
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step(p, {"w": g}, state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], ref, rtol=1e-12)
    assert state["w"].step == 5


def test_adam_skips_missing_and_rejects_nonfinite():
    p = {"a": np.ones(2), "b": np.ones(2)}
    state = {}
    adam_step(p, {"a": None, "b": np.ones(2)}, state, 0.1)
    np.testing.assert_array_equal(p["a"], [1.0, 1.0])
    assert "a" not in state
    before = {k: v.copy() for k, v in p.items()}
    with pytest.raises(NonFiniteGradientError) as info:
        adam_step(p, {"a": np.ones(2), "b": np.array([np.nan, 0.0])}, state, 0.1)
    assert info.value.param_name == "b"
    for k in p:
        np.testing.assert_array_equal(p[k], before[k])


def test_adam_converges_on_quadratic():
    w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([ParamGroup("w", {"w": w}, constant(0.05))])
    for i in range(500):
        opt.zero_grad()
        ad.tsum(ad.square(w - np.array([1.0, 0.5]))).backward()
        opt.step(i)
    np.testing.assert_allclose(w.data, [1.0, 0.5], atol=1e-2)


def test_group_clip_norm():
    w = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([ParamGroup("w", {"w": w}, constant(0.1), clip_norm=1.0)])
    w.grad = np.array([30.0, 40.0])
    opt.step(0)
    assert opt.state["w.w"].m == pytest.approx(np.array([0.06, 0.08]))


def test_exponential_decay_endpoints():
    s = exponential_decay(1e-3, 1e-5, 100)
    assert s(0) == pytest.approx(1e-3)
    assert s(50) == pytest.approx(1e-4)
    assert s(100) == pytest.approx(1e-5)
    assert s(1000) == pytest.approx(1e-5)
