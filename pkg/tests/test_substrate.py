import numpy as np
import pytest

from jr2net.gradcheck import TOLERANCE, check_conv, check_relu, numeric_grad, relative_error
from jr2net.oracles import naive_conv2d
from jr2net.substrate import (CheckpointError, ConvParams, OptimizerConfig, Parameter, TrainingError,
                              adam_step, conv2d_backward, conv2d_forward, inverse_softplus,
                              read_blocks, relu_backward, relu_forward, softplus, softplus_grad,
                              write_blocks)


def identity_conv(C):
    w = np.zeros((C, C, 3, 3))
    for c in range(C):
        w[c, c, 1, 1] = 1
    return ConvParams(w, np.zeros(C))


def test_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 5, 6, 3))
    np.testing.assert_array_equal(conv2d_forward(x, identity_conv(3)), x)


def test_ones_kernel_interior():
    c = 0.7
    x = np.full((1, 5, 5, 2), c)
    p = ConvParams(np.ones((1, 2, 3, 3)), np.zeros(1))
    out = conv2d_forward(x, p)
    assert out[0, 2, 2, 0] == pytest.approx(9 * c * 2)
    # corner sees a 2x2 patch only
    assert out[0, 0, 0, 0] == pytest.approx(4 * c * 2)


def test_conv_matches_naive_loops():
    rng = np.random.default_rng(1)
    for _ in range(3):
        x = rng.standard_normal((2, 5, 4, 3))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        np.testing.assert_allclose(conv2d_forward(x, ConvParams(w, b)), naive_conv2d(x, w, b),
                                   rtol=1e-12, atol=1e-12)


def test_conv_5x5_kernel_matches_naive():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 6, 7, 2))
    w = rng.standard_normal((3, 2, 5, 5))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(conv2d_forward(x, ConvParams(w, b)), naive_conv2d(x, w, b),
                               rtol=1e-12, atol=1e-12)


def test_conv_preserves_spatial_dims():
    p = ConvParams.init(3, 5, rng=0)
    for H, W in [(1, 1), (7, 3), (16, 9)]:
        assert conv2d_forward(np.ones((1, H, W, 3)), p).shape == (1, H, W, 5)


def test_conv_channel_mismatch():
    with pytest.raises(ValueError):
        conv2d_forward(np.ones((1, 4, 4, 2)), ConvParams.init(3, 5, rng=0))


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        ConvParams(np.zeros((1, 1, 2, 2)), np.zeros(1))


def test_backward_zero_upstream():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 4, 4, 2))
    p = ConvParams.init(2, 3, rng=rng)
    dx, dw, db = conv2d_backward(x, p, np.zeros((1, 4, 4, 3)))
    assert not dx.any() and not dw.any() and not db.any()


def test_backward_identity_passes_upstream():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 4, 5, 2))
    g = rng.standard_normal((1, 4, 5, 2))
    dx, _, _ = conv2d_backward(x, identity_conv(2), g)
    np.testing.assert_array_equal(dx, g)


def test_backward_shape_mismatch():
    p = ConvParams.init(2, 3, rng=0)
    with pytest.raises(ValueError):
        conv2d_backward(np.ones((1, 4, 4, 2)), p, np.ones((1, 4, 4, 2)))


def test_conv_gradcheck_20_instances():
    rng = np.random.default_rng(5)
    errs = [e for _ in range(20) for _, e in check_conv(rng, shape=(1, 6, 6, 2))]
    assert max(errs) < 1e-4


def test_relu_definition():
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(relu_forward(x), [0, 0, 2])
    np.testing.assert_array_equal(relu_backward(np.array([2.0, -1.0]), np.ones(2)), [1, 0])


def test_relu_gradcheck():
    rng = np.random.default_rng(6)
    errs = [e for _ in range(20) for _, e in check_relu(rng)]
    assert max(errs) < 1e-6


def test_softplus_gradient_and_inverse():
    x = np.linspace(-5, 5, 11)
    num = (softplus(x + 1e-6) - softplus(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(softplus_grad(x), num, rtol=1e-7)
    for v in (0.01, 0.1, 3.0):
        assert softplus(inverse_softplus(v)) == pytest.approx(v, rel=1e-12)


def test_numeric_grad_helper_on_quadratic():
    x = np.array([1.0, -2.0, 3.0])
    g = numeric_grad(lambda: np.sum(x ** 2), x, np.arange(3))
    assert relative_error(2 * x, g) < 1e-9
    np.testing.assert_array_equal(x, [1.0, -2.0, 3.0])


def test_adam_zero_gradient_is_fixed_point():
    p = Parameter(np.array([1.5, -2.0]))
    for _ in range(10):
        adam_step(p, np.zeros(2))
    np.testing.assert_array_equal(p.value, [1.5, -2.0])


def test_adam_first_step_is_signed_lr():
    cfg = OptimizerConfig(lr=1e-3)
    for g in (3.0, -0.02, 150.0):
        p = Parameter(np.array(0.0))
        adam_step(p, np.array(g), cfg)
        # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
        assert p.value == pytest.approx(-cfg.lr * np.sign(g), rel=1e-6)
        assert p.step == 1


def test_adam_constant_gradient_descends_at_lr():
    cfg = OptimizerConfig(lr=1e-3)
    p = Parameter(np.array(0.0))
    prev = 0.0
    for _ in range(500):
        adam_step(p, np.array(2.0), cfg)
        assert p.value < prev
        prev = float(p.value)
    assert p.value == pytest.approx(-500 * cfg.lr, rel=1e-3)


def test_adam_rejects_non_finite():
    with pytest.raises(TrainingError):
        adam_step(Parameter(np.zeros(2)), np.array([1.0, np.nan]))


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(lr=0)
    with pytest.raises(ValueError):
        OptimizerConfig(beta1=1.0)


def test_checkpoint_blocks_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    blocks = {"D.0.weight": rng.standard_normal((2, 3, 3, 3)).astype(np.float32),
              "mu.0": np.array(0.25, dtype=np.float32),
              "H.0.0.bias": rng.standard_normal(4).astype(np.float32)}
    p = tmp_path / "w.jr2w"
    write_blocks(p, blocks)
    raw = p.read_bytes()
    assert raw[:4] == b"JR2W"
    back = read_blocks(p)
    assert list(back) == list(blocks)
    for k in blocks:
        np.testing.assert_array_equal(back[k], blocks[k])
        assert back[k].shape == blocks[k].shape


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.jr2w"
    p.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(CheckpointError):
        read_blocks(p)
    write_blocks(p, {"a": np.ones(4)})
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        read_blocks(p)


def test_gradcheck_tolerance_constant():
    assert TOLERANCE == 1e-3
