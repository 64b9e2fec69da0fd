"""Optimizer semantics: bias correction, decay placement, state round trips,
and agreement between the compiled and pure-numpy kernels."""

import numpy as np
import pytest

from cloudvol.tensor import Adam, Tensor, backward, kernel_backend
from cloudvol.tensor import _kernels_np


def quad_loss(p):
    return (p * p).sum()


def test_first_step_is_lr_times_sign():
    # with zero-initialized moments, m_hat = g and v_hat = g^2, so the first
    # update is lr * g / (|g| + eps) ~= lr * sign(g)
    p = Tensor(np.array([1.0, -2.0, 0.5]), dtype=np.float64, requires_grad=True)
    opt = Adam([p], lr=0.00015)
    backward(quad_loss(p))
    opt.step()
    np.testing.assert_allclose(p.data, [1 - 0.00015, -2 + 0.00015, 0.5 - 0.00015], atol=1e-9)


def test_weight_decay_enters_the_gradient():
    # decay couples into m and v, so two params with equal grads but different
    # values must receive different updates
    p = Tensor(np.array([10.0, 0.0]), dtype=np.float64, requires_grad=True)
    opt = Adam([p], lr=1e-3, weight_decay=0.1)
    p.grad = np.array([1.0, 1.0])
    opt.step()
    assert p.data[0] != pytest.approx(10.0 - (1e-3 - p.data[1]))
    assert abs(10.0 - p.data[0]) > abs(0.0 - p.data[1])


def test_quadratic_converges():
    rng = np.random.default_rng(0)
    p = Tensor(rng.standard_normal(16), dtype=np.float64, requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(400):
        opt.zero_grad()
        backward(quad_loss(p))
        opt.step()
    assert np.abs(p.data).max() < 1e-3


def test_state_dict_roundtrip_resumes_identically():
    rng = np.random.default_rng(1)

    def fresh():
        return Tensor(rng_init.copy(), dtype=np.float32, requires_grad=True)

    rng_init = rng.standard_normal(32).astype(np.float32)
    grads = [rng.standard_normal(32).astype(np.float32) for _ in range(6)]

    p1 = fresh()
    opt1 = Adam({"w": p1}, lr=1e-2)
    for g in grads:
        p1.grad = g.copy()
        opt1.step()

    p2 = fresh()
    opt2 = Adam({"w": p2}, lr=1e-2)
    for g in grads[:3]:
        p2.grad = g.copy()
        opt2.step()
    saved_param = p2.data.copy()
    state = opt2.state_dict()

    p3 = Tensor(saved_param, dtype=np.float32, requires_grad=True)
    opt3 = Adam({"w": p3}, lr=1e-2)
    opt3.load_state_dict(state)
    assert opt3.t == 3
    for g in grads[3:]:
        p3.grad = g.copy()
        opt3.step()
    np.testing.assert_array_equal(p1.data, p3.data)


def test_missing_grad_is_skipped():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    opt = Adam([a, b], lr=0.1)
    a.grad = np.ones(3, np.float32)
    opt.step()
    np.testing.assert_array_equal(b.data, np.ones(3))
    assert not np.array_equal(a.data, np.ones(3))


@pytest.mark.skipif(kernel_backend() != "cython", reason="compiled kernels not built")
def test_backends_agree_bitwise():
    from cloudvol.tensor import _kernels as compiled

    rng = np.random.default_rng(2)
    for dtype in (np.float32, np.float64):
        param_a = rng.standard_normal(257).astype(dtype)
        param_b = param_a.copy()
        m_a = np.zeros_like(param_a); v_a = np.zeros_like(param_a)
        m_b = np.zeros_like(param_b); v_b = np.zeros_like(param_b)
        for t in range(1, 5):
            g = rng.standard_normal(257).astype(dtype)
            args = (1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 ** t, 1 - 0.999 ** t, 1e-5)
            compiled.adam_step_inplace(param_a, g, m_a, v_a, *args)
            _kernels_np.adam_step_inplace(param_b, g.copy(), m_b, v_b, *args)
        assert param_a.tobytes() == param_b.tobytes()
        assert m_a.tobytes() == m_b.tobytes()
        assert v_a.tobytes() == v_b.tobytes()


@pytest.mark.skipif(kernel_backend() != "cython", reason="compiled kernels not built")
def test_conv_kernels_agree_bitwise():
    from cloudvol.tensor import _kernels as compiled

    rng = np.random.default_rng(3)
    for dtype, stride in ((np.float32, 1), (np.float32, 2), (np.float64, 1)):
        xp = rng.standard_normal((2, 9, 8, 3)).astype(dtype)
        cols_c = compiled.im2col(xp, 3, stride)
        cols_n = _kernels_np.im2col(xp, 3, stride)
        assert cols_c.tobytes() == cols_n.tobytes()
        back_c = compiled.col2im(cols_c, xp.shape, 3, stride)
        back_n = _kernels_np.col2im(cols_n, xp.shape, 3, stride)
        assert back_c.tobytes() == back_n.tobytes()
