import numpy as np
import pytest

from distaug import nn
from distaug.errors import NonFiniteActivation, NoForwardTrace, ShapeMismatch
from distaug.nn.checkpoint import load_network, save_network
from nn_cases import KINDS, make_case
from oracles import adam_closed_form, naive_conv2d


def test_identity_network():
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 5))
    net = nn.Network([], x.shape[1:])
    y, tape = net.forward(x)
    assert np.array_equal(y, x)
    gx, grads = net.backward(tape, np.ones_like(x))
    assert np.array_equal(gx, np.ones_like(x)) and grads == []


def test_unit_impulse_kernel():
    conv = nn.Conv2d(1, 1, 3)
    conv.params[0][:] = 0
    conv.params[0][0, 0, 1, 1] = 1
    x = np.random.default_rng(1).normal(size=(1, 1, 6, 6))
    y = nn.Network([conv])(x)
    assert np.array_equal(y[0, 0], x[0, 0, 1:-1, 1:-1])


def test_one_by_one_conv_hand_computed():
    conv = nn.Conv2d(2, 2, 1)
    conv.params[0][:, :, 0, 0] = [[1.0, 2.0], [-1.0, 0.5]]
    x = np.arange(18, dtype=float).reshape(1, 2, 3, 3)
    y = nn.Network([conv])(x)
    a, b = x[0, 0], x[0, 1]
    assert np.array_equal(y[0, 0], a + 2 * b)
    assert np.array_equal(y[0, 1], -a + 0.5 * b)


@pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1), (1, 2)])
def test_conv_matches_loop_oracle(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    conv = nn.Conv2d(3, 2, 3, stride, pad, rng=rng)
    conv.params[1][:] = rng.normal(size=2)
    x = rng.normal(size=(2, 3, 7, 6))
    assert np.allclose(nn.Network([conv])(x), naive_conv2d(x, *conv.params, stride, pad))


def test_transposed_conv_is_adjoint_of_conv():
    rng = np.random.default_rng(2)
    conv = nn.Conv2d(2, 3, 3, 2, 1, rng=rng)
    tconv = nn.ConvTranspose2d(3, 2, 3, 2, 1, output_padding=1, rng=rng)
    tconv.params[0][:] = conv.params[0]
    x = rng.normal(size=(1, 2, 8, 8))
    y = rng.normal(size=(1, 3, 4, 4))
    # <conv(x), y> == <x, conv^T(y)> with zero biases
    lhs = np.sum(nn.Network([conv])(x) * y)
    rhs = np.sum(x * nn.Network([tconv])(y))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_instance_norm_statistics():
    x = np.random.default_rng(3).normal(3, 4, size=(2, 3, 5, 7))
    layer = nn.InstanceNorm(3, affine=False)
    y = nn.Network([layer])(x)
    assert np.allclose(y.mean(axis=(2, 3)), 0, atol=1e-5)
    assert np.allclose(y.var(axis=(2, 3)), 1, atol=1e-5)


def test_forward_deterministic():
    net, x = make_case("residual_block", np.random.default_rng(4))
    assert np.array_equal(net(x), net(x))


def test_shape_mismatch():
    net = nn.Network([nn.Conv2d(2, 1, 3)], (2, 5, 5))
    with pytest.raises(ShapeMismatch):
        net(np.zeros((1, 3, 5, 5)))
    with pytest.raises(ShapeMismatch):
        net(np.zeros((2, 5, 5)))


def test_non_finite_guard():
    conv = nn.Conv2d(1, 1, 1)
    conv.params[0][:] = 1e308
    with pytest.raises(NonFiniteActivation):
        nn.Network([conv])(np.full((1, 1, 2, 2), 10.0))


def test_backward_without_forward():
    net = nn.Network([nn.ReLU()])
    with pytest.raises(NoForwardTrace):
        nn.backward(net, np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)))


def test_constant_loss_zero_gradients():
    net, x = make_case("conv2d", np.random.default_rng(5))
    y, tape = net.forward(x)
    gx, grads = net.backward(tape, np.zeros_like(y))
    assert not np.any(gx) and all(not np.any(g) for g in grads)


def test_square_loss_scalar():
    # 1x1 conv with weight w on input 1 gives y = w; L = y^2 so dL/dw = 2w
    conv = nn.Conv2d(1, 1, 1)
    w = 0.7
    conv.params[0][:] = w
    net = nn.Network([conv])
    x = np.ones((1, 1, 1, 1))
    y, tape = net.forward(x)
    _, (gw, gb) = net.backward(tape, 2 * y)
    assert gw.item() == 2 * w
    assert gb.item() == 2 * w


@pytest.mark.parametrize("kind", KINDS)
def test_grad_check_each_kind(kind):
    rng = np.random.default_rng(hash(kind) % 2**32)
    for _ in range(5):
        net, x = make_case(kind, rng)
        rep = nn.grad_check(net, x, tolerance=1e-4, rng=rng)
        assert rep.passed, rep.max_rel_error


def test_linear_layer_tight():
    rng = np.random.default_rng(6)
    net, x = make_case("conv2d", rng)
    assert nn.grad_check(net, x, rng=rng).worst() < 1e-6


def test_small_random_net_grad_check():
    rng = np.random.default_rng(7)
    net = nn.Network([nn.Conv2d(1, 4, 3, 1, 1, rng=rng), nn.InstanceNorm(4), nn.LeakyReLU(),
                      nn.Conv2d(4, 2, 3, 2, 1, rng=rng), nn.Tanh(),
                      nn.ConvTranspose2d(2, 1, 3, 2, 1, output_padding=1, rng=rng),
                      nn.Sigmoid()], (1, 8, 8))
    assert net.num_params() <= 1000
    rep = nn.grad_check(net, rng.normal(size=(2, 1, 8, 8)), rng=rng)
    assert rep.passed, rep.max_rel_error


def test_adam_zero_gradients():
    p = [np.array([1.0, -2.0])]
    st = nn.OptimizerState.for_params(p)
    nn.opt_step(st, p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0]) and st.step == 1


def test_adam_closed_form_step():
    p0 = np.array([0.5, -1.5, 2.0])
    g = np.array([0.1, -3.0, 0.0])
    p = [p0.copy()]
    st = nn.OptimizerState.for_params(p, learning_rate=0.01, beta1=0.5)
    nn.opt_step(st, p, [g])
    assert np.allclose(p[0], adam_closed_form(p0, g, 0.01, 0.5, 0.999, 1e-8))


def test_adam_decreases_quadratic():
    a = np.array([1.0, 2.0, -3.0])
    p = [np.zeros(3)]
    st = nn.OptimizerState.for_params(p, learning_rate=0.1)
    loss = lambda v: float(np.sum((v - a) ** 2))  # noqa: E731
    before = loss(p[0])
    for _ in range(2):
        nn.opt_step(st, p, [2 * (p[0] - a)])
    assert loss(p[0]) < before


def test_adam_shape_mismatch():
    p = [np.zeros(3)]
    st = nn.OptimizerState.for_params(p)
    with pytest.raises(ShapeMismatch):
        nn.opt_step(st, p, [np.zeros(4)])


def test_checkpoint_round_trip_and_byte_stable(tmp_path):
    rng = np.random.default_rng(8)
    net = nn.Network([nn.Conv2d(1, 2, 3, 1, 1, rng=rng), nn.ResidualBlock(2, rng=rng),
                      nn.ConvTranspose2d(2, 1, 3, 2, 1, output_padding=(1, 0), rng=rng)],
                     (1, 6, 5))
    opt = nn.OptimizerState.for_params(net.params)
    nn.opt_step(opt, net.params, [np.ones_like(p) for p in net.params])
    save_network(tmp_path / "a.ckpt", net, opt)
    back, opt2 = load_network(tmp_path / "a.ckpt")
    x = rng.normal(size=(1, 1, 6, 5))
    assert np.array_equal(back(x), net(x))
    assert opt2.step == 1 and all(np.array_equal(a, b) for a, b in zip(opt.m, opt2.m))
    save_network(tmp_path / "b.ckpt", back, opt2)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_custom_residual_body_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    body = [nn.Conv2d(1, 3, 3, 1, 1, rng=rng), nn.ReLU(), nn.Conv2d(3, 1, 3, 1, 1, rng=rng)]
    net = nn.Network([nn.ResidualBlock(1, body=body)], (1, 5, 5))
    x = rng.normal(size=(1, 1, 5, 5))
    inner = nn.Network(body)(x)
    assert np.allclose(net(x), x + inner)
    save_network(tmp_path / "r.ckpt", net)
    back, _ = load_network(tmp_path / "r.ckpt")
    assert np.array_equal(back(x), net(x))
    assert nn.grad_check(net, x, rng=rng).passed
