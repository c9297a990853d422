"""Dense-network plumbing: parameter layout, recorded vs plain passes, jets."""

import numpy as np
import pytest

import flamelet_pinn.autodiff as ad
from flamelet_pinn.pinn.networks import MLP, BranchedNet


def test_param_count_and_layout():
    net = MLP([2, 8, 3])
    assert net.n_params == (2 * 8 + 8) + (8 * 3 + 3)
    net2 = MLP([1, 50, 50, 50, 50, 4])
    assert net2.n_params == (1 * 50 + 50) + 3 * (50 * 50 + 50) + (50 * 4 + 4)


def test_init_glorot_bounds_and_zero_biases():
    net = MLP([3, 16, 2])
    theta = net.init_params(np.random.default_rng(7))
    pos = 0
    for n_in, n_out, _, _ in net.layers:
        W = theta[pos:pos + n_in * n_out]
        limit = np.sqrt(6.0 / (n_in + n_out))
        assert np.all(np.abs(W) <= limit)
        pos += n_in * n_out
        assert np.all(theta[pos:pos + n_out] == 0.0)
        pos += n_out
    theta2 = MLP([3, 16, 2]).init_params(np.random.default_rng(7))
    np.testing.assert_array_equal(theta, theta2)


def test_recorded_pass_matches_plain_pass():
    net = MLP([2, 6, 6, 3])
    theta = net.init_params(np.random.default_rng(1))
    x = np.linspace(-1.0, 1.0, 5)
    y = np.cos(x)
    tape = ad.Tape()
    tape.set_params(theta)
    outs = net.forward(tape, [x, y])
    rec = np.stack([np.broadcast_to(ad.value_of(o), x.shape) for o in outs])
    plain = net.forward_plain(theta, np.stack([x, y]))
    np.testing.assert_allclose(rec, plain, rtol=1e-13)


def test_linear_output_head():
    net = MLP([1, 4, 2], out=None)
    theta = net.init_params(np.random.default_rng(3))
    x = np.array([0.3, -0.8])
    plain = net.forward_plain(theta, x[None, :])
    # reproduce by hand: tanh hidden, affine out
    W0 = theta[:4].reshape(4, 1)
    b0 = theta[4:8]
    W1 = theta[8:16].reshape(2, 4)
    b1 = theta[16:18]
    hand = W1 @ np.tanh(W0 @ x[None, :] + b0[:, None]) + b1[:, None]
    np.testing.assert_allclose(plain, hand, rtol=1e-14)


def test_parameter_gradient_matches_finite_differences():
    net = MLP([1, 5, 2])
    theta0 = net.init_params(np.random.default_rng(9))

    def loss_at(theta):
        tape = ad.Tape()
        tape.set_params(theta)
        outs = net.forward(tape, [np.array([0.2, -0.4, 0.9])])
        total = ad.sum_nodes([ad.mean_lanes(o) for o in outs])
        return tape, total

    tape, total = loss_at(theta0)
    ad.backward(total)
    g = tape.param_grad.copy()
    rng = np.random.default_rng(2)
    for idx in rng.choice(net.n_params, size=8, replace=False):
        h = 1e-6 * max(1.0, abs(theta0[idx]))
        tp = theta0.copy()
        tp[idx] += h
        tm = theta0.copy()
        tm[idx] -= h
        fp = ad.value_of(loss_at(tp)[1])
        fm = ad.value_of(loss_at(tm)[1])
        fd = (fp - fm) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=2e-6, abs=1e-10)


def test_dual_inputs_carry_first_and_second_derivatives():
    net = MLP([1, 6, 1])
    theta = net.init_params(np.random.default_rng(4))
    x0 = 0.37

    def f(x):
        return float(net.forward_plain(theta, np.array([[x]]))[0, 0])

    tape = ad.Tape()
    tape.set_params(theta)
    out = net.forward(tape, [ad.Dual(x0, 1.0, 0.0)])[0]
    assert isinstance(out, ad.Dual)
    h = 1e-4
    d1_fd = (f(x0 + h) - f(x0 - h)) / (2 * h)
    d2_fd = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / (h * h)
    d1 = np.asarray(ad.value_of(out.tangent)).reshape(-1)[0]
    d2 = np.asarray(ad.value_of(out.tangent2)).reshape(-1)[0]
    assert d1 == pytest.approx(d1_fd, rel=1e-6)
    assert d2 == pytest.approx(d2_fd, rel=1e-4)


def test_layer_arity_mismatch_raises():
    net = MLP([2, 4, 1])
    tape = ad.Tape()
    tape.set_params(net.init_params(np.random.default_rng(0)))
    with pytest.raises(ad.AutodiffError):
        net.forward(tape, [np.array([1.0])])
    with pytest.raises(ValueError):
        MLP([3])


def test_offset_slice_is_respected():
    rng = np.random.default_rng(12)
    base = MLP([2, 5, 1])
    shifted = MLP([2, 5, 1], offset=10)
    theta = base.init_params(rng)
    padded = np.concatenate([np.full(10, 99.0), theta])
    X = np.array([[0.1, -0.5], [0.7, 0.2]])
    np.testing.assert_array_equal(base.forward_plain(theta, X),
                                  shifted.forward_plain(padded, X))


def test_branched_net_param_count_and_agreement():
    net = BranchedNet(n_coord=2, n_param=1, n_out=4, width=10)
    assert net.n_params == (net.coord_enc.n_params + net.param_enc.n_params
                            + net.decoder.n_params)
    theta = net.init_params(np.random.default_rng(6))
    t = np.array([0.1, 0.4, 0.9])
    z = np.array([0.2, 0.5, 0.8])
    a = np.array([3.0])
    tape = ad.Tape()
    tape.set_params(theta)
    outs = net.forward(tape, [t, z], [a])
    rec = np.stack([np.broadcast_to(ad.value_of(o), t.shape) for o in outs])
    plain = net.forward_plain(theta, np.stack([t, z]), a[:, None])
    np.testing.assert_allclose(rec, plain, rtol=1e-13)


def test_branched_net_broadcasts_single_parameter_column():
    net = BranchedNet(n_coord=1, n_param=1, n_out=2, width=8)
    theta = net.init_params(np.random.default_rng(8))
    X = np.linspace(0, 1, 7)[None, :]
    one = net.forward_plain(theta, X, np.array([[2.0]]))
    many = net.forward_plain(theta, X, np.full((1, 7), 2.0))
    np.testing.assert_allclose(one, many, rtol=1e-14)
    assert one.shape == (2, 7)
