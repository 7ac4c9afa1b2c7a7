import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argue.errors import ShapeError
from argue.nn import (
    AdamState,
    LayerSpec,
    Network,
    adam_step,
    backward,
    bce_grad,
    cce_grad,
    dense_stack,
    forward,
    loss_bce,
    loss_cce,
    loss_mse_recon,
    mse_grad,
)
from helpers import central_diff, max_rel_error


def random_net(seed, widths, final="sigmoid", input_dim=5):
    rng = np.random.default_rng(seed)
    return Network.initialize(dense_stack(input_dim, widths, final), rng)


class TestLayerSpec:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            LayerSpec(0, 3, "sigmoid")

    def test_rejects_unknown_activation(self):
        with pytest.raises(ValueError):
            LayerSpec(2, 3, "tanh")

    def test_softmax_only_last(self):
        layers = [LayerSpec(2, 3, "softmax"), LayerSpec(3, 2, "sigmoid")]
        with pytest.raises(ValueError):
            Network.initialize(layers, np.random.default_rng(0))

    def test_chain_checked(self):
        layers = [LayerSpec(2, 3, "leaky_relu"), LayerSpec(4, 2, "sigmoid")]
        with pytest.raises(ValueError):
            Network.initialize(layers, np.random.default_rng(0))

    def test_non_finite_weights_rejected(self):
        W = [np.array([[np.nan]])]
        with pytest.raises(ValueError):
            Network([LayerSpec(1, 1, "identity")], W, [np.zeros(1)])


class TestForward:
    def test_identity_layer(self):
        net = Network([LayerSpec(2, 2, "identity")], [np.eye(2)], [np.zeros(2)])
        np.testing.assert_array_equal(forward(net, [0.3, 0.7]).output, [0.3, 0.7])

    def test_softmax_zero_preactivation(self):
        net = Network([LayerSpec(3, 4, "softmax")], [np.zeros((3, 4))], [np.zeros(4)])
        np.testing.assert_allclose(forward(net, [1.0, -2.0, 0.5]).output, [0.25] * 4)

    def test_matches_straight_line_oracle(self):
        net = random_net(7, [6, 4, 3])
        x = np.random.default_rng(1).normal(size=5)
        h = x
        for W, b, spec in zip(net.weights, net.biases, net.layers):
            z = h @ W + b
            if spec.activation == "leaky_relu":
                h = np.where(z > 0, z, 0.01 * z)
            else:
                h = 1 / (1 + np.exp(-z))
        np.testing.assert_allclose(forward(net, x).output, h, rtol=1e-13)

    def test_trace_shapes(self):
        net = random_net(0, [4, 2, 3])
        tr = forward(net, np.zeros(5))
        assert [h.shape for h in tr.hidden_activations] == [(4,), (2,)]
        assert tr.output.shape == (3,)

    def test_batch_matches_rows(self):
        net = random_net(3, [4, 3])
        X = np.random.default_rng(2).normal(size=(6, 5))
        out = forward(net, X).output
        for i in range(6):
            np.testing.assert_allclose(forward(net, X[i]).output, out[i], rtol=1e-14)

    def test_pure(self):
        net = random_net(4, [4, 3])
        x = np.linspace(0, 1, 5)
        assert np.array_equal(forward(net, x).output, forward(net, x).output)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            forward(random_net(0, [3]), np.zeros(4))

    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
    def test_softmax_simplex(self, x):
        net = Network.initialize(dense_stack(3, [5], "softmax"), np.random.default_rng(0))
        p = forward(net, np.array(x)).output
        assert np.all(p >= 0)
        assert abs(p.sum() - 1) < 1e-6


class TestLosses:
    def test_bce_values(self):
        assert loss_bce(np.array(1.0), np.array(0.5)) == pytest.approx(math.log(2))
        assert loss_bce(np.array(0.0), np.array(0.5)) == pytest.approx(math.log(2))
        assert loss_bce(np.array(1.0), np.array(0.9)) == pytest.approx(0.10536, abs=1e-5)
        assert loss_bce(np.array(1.0), np.array(0.9)) == pytest.approx(-math.log(0.9), rel=1e-14)

    def test_bce_clamped(self):
        assert np.isfinite(loss_bce(np.array(1.0), np.array(0.0)))
        assert loss_bce(np.array(1.0), np.array(1.0)) < 1e-6

    def test_cce_values(self):
        onehot = np.array([0.0, 1.0, 0.0, 0.0])
        assert loss_cce(onehot, onehot) < 1e-6
        assert loss_cce(onehot, np.full(4, 0.25)) == pytest.approx(math.log(4))
        assert loss_cce(np.array([0.5, 0.5]), np.array([0.9, 0.1])) == pytest.approx(1.2040, abs=1e-4)
        assert loss_cce(np.array([0.5, 0.5]), np.array([0.9, 0.1])) == pytest.approx(
            -0.5 * (math.log(0.9) + math.log(0.1)), rel=1e-14
        )

    def test_cce_shape_error(self):
        with pytest.raises(ShapeError):
            loss_cce(np.ones(3) / 3, np.ones(4) / 4)

    def test_mse_values(self):
        assert loss_mse_recon(np.array([0.2, 0.4]), np.array([0.2, 0.4])) == 0
        assert loss_mse_recon(np.array([0.0, 1.0]), np.array([1.0, 0.0])) == 1.0
        rng = np.random.default_rng(5)
        a, b = rng.random(5), rng.random(5)
        assert loss_mse_recon(a, b) == pytest.approx(sum((a[i] - b[i]) ** 2 for i in range(5)) / 5, rel=1e-14)
        with pytest.raises(ShapeError):
            loss_mse_recon(np.zeros(2), np.zeros(3))

    @given(st.floats(0, 1), st.floats(1e-6, 1 - 1e-6))
    def test_bce_nonnegative(self, y, p):
        assert loss_bce(np.array(y), np.array(p)) >= 0

    def test_bce_sigmoid_identity(self):
        # dL/dz through a sigmoid output is y_hat - y
        net = Network([LayerSpec(1, 1, "sigmoid")], [np.array([[0.7]])], [np.array([0.1])])
        for y in (0.0, 1.0, 0.3):
            tr = forward(net, np.array([[0.4]]))
            grads, _ = backward(net, tr, bce_grad(np.array([[y]]), tr.output))
            np.testing.assert_allclose(grads[1], tr.output[0] - y, rtol=1e-10)

    def test_loss_grads_match_fd(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, (4, 1)).astype(float)
        q = rng.uniform(0.1, 0.9, (4, 1))
        p = rng.dirichlet(np.ones(3), 4)
        r = rng.dirichlet(np.ones(3), 4)
        x, xh = rng.random((4, 3)), rng.random((4, 3))
        for fn, grad, a, b in (
            (loss_bce, bce_grad, y, q),
            (loss_cce, cce_grad, p, r),
            (loss_mse_recon, mse_grad, x, xh),
        ):
            b = b.copy()
            numeric = central_diff(lambda: fn(a, b), [b])
            assert max_rel_error([grad(a, b)], numeric) < 1e-7


class TestBackward:
    def test_zero_weight_constant_loss(self):
        net = Network([LayerSpec(3, 2, "identity")], [np.zeros((3, 2))], [np.zeros(2)])
        grads, g_in = backward(net, forward(net, np.ones(3)))
        assert all(not g.any() for g in grads)
        assert not g_in.any()

    def test_shapes_match_params(self):
        net = random_net(1, [4, 3, 2], "softmax")
        grads, _ = backward(net, forward(net, np.ones((3, 5))), np.ones((3, 2)))
        assert [g.shape for g in grads] == [p.shape for p in net.params()]

    @pytest.mark.parametrize("final", ["sigmoid", "softmax", "identity"])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, seed, final):
        net = random_net(seed, [4, 6, 3], final)
        rng = np.random.default_rng(100 + seed)
        X = rng.normal(size=(4, 5))
        target = rng.random((4, 3))
        hidden_w = [rng.normal(size=(4, 4)), None]

        def loss():
            tr = forward(net, X)
            return float(np.sum((tr.output - target) ** 2) + np.sum(hidden_w[0] * tr.hidden_activations[0]))

        tr = forward(net, X)
        grads, g_in = backward(net, tr, 2 * (tr.output - target), hidden_w)
        assert max_rel_error(grads, central_diff(loss, net.params())) < 1e-6
        Xc = X.copy()

        def loss_x():
            tr = forward(net, Xc)
            return float(np.sum((tr.output - target) ** 2) + np.sum(hidden_w[0] * tr.hidden_activations[0]))

        assert max_rel_error([g_in], central_diff(loss_x, [Xc])) < 1e-6


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState(lr=0.1)
        adam_step(p, [np.array([3.0, 3.0])], state)
        before = p[0].copy()
        m_before = state.m[0].copy()
        adam_step(p, [np.zeros(2)], state)
        # with zero gradient the step still follows the decayed moments, so check moments only
        np.testing.assert_allclose(state.m[0], 0.9 * m_before)
        fresh = [before.copy()]
        adam_step(fresh, [np.zeros(2)], AdamState(lr=0.1))
        np.testing.assert_array_equal(fresh[0], before)
        assert state.step == 2

    def test_first_step_is_signed_lr(self):
        p = [np.array([0.0, 0.0, 0.0])]
        g = np.array([3.0, -0.2, 1e-3])
        adam_step(p, [g], AdamState(lr=0.01))
        np.testing.assert_allclose(p[0], -0.01 * np.sign(g), rtol=1e-4)

    def test_three_steps_on_quadratic(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta, m, v = 2.0, 0.0, 0.0
        for t in range(1, 4):
            g = 2 * theta
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        p = [np.array([2.0])]
        state = AdamState(lr=lr)
        for _ in range(3):
            adam_step(p, [2 * p[0]], state)
        assert p[0][0] == pytest.approx(theta, rel=1e-14)
        assert state.step == 3

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step([np.zeros(2)], [], AdamState())

    @settings(max_examples=30)
    @given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-3))
    def test_first_step_sign(self, g):
        p = [np.array([0.0])]
        adam_step(p, [np.array([g])], AdamState(lr=1e-3))
        assert np.sign(p[0][0]) == -np.sign(g)
