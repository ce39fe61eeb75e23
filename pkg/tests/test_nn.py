import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siva import nn
from conftest import central_difference, max_relative_error


def small_net(seed=3, dims=(5, 8, 6, 3)):
    specs = [nn.LayerSpec(a, b, "leaky_relu") for a, b in zip(dims[:-2], dims[1:-1])]
    specs.append(nn.LayerSpec(dims[-2], dims[-1], "linear"))
    return nn.mlp_init(specs, seed)


class TestInit:
    def test_shapes_chain(self):
        specs = [
            nn.LayerSpec(16, 64),
            nn.LayerSpec(64, 32),
            nn.LayerSpec(32, 16),
            nn.LayerSpec(16, 4, "linear"),
        ]
        net = nn.mlp_init(specs, 42)
        assert [l.weights.shape for l in net.layers] == [
            (64, 16), (32, 64), (16, 32), (4, 16)
        ]
        assert all(np.all(l.bias == 0.0) for l in net.layers)

    def test_same_seed_bitwise_identical(self):
        specs = [nn.LayerSpec(4, 7), nn.LayerSpec(7, 2, "linear")]
        a = nn.mlp_init(specs, 42)
        b = nn.mlp_init(specs, 42)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_empty_specs_rejected(self):
        with pytest.raises(ValueError):
            nn.mlp_init([], 1)

    def test_non_chaining_dims_rejected(self):
        with pytest.raises(ValueError):
            nn.mlp_init([nn.LayerSpec(4, 7), nn.LayerSpec(6, 2)], 1)

    def test_fan_in_scaling(self):
        net = nn.mlp_init([nn.LayerSpec(400, 300)], 0)
        assert np.std(net.layers[0].weights) == pytest.approx(
            math.sqrt(2.0 / 400), rel=0.05
        )

    def test_zero_init_scale(self):
        net = nn.mlp_init([nn.LayerSpec(4, 3, "linear", init_scale=0.0)], 0)
        assert np.all(net.layers[0].weights == 0.0)

    def test_bad_layer_specs(self):
        with pytest.raises(ValueError):
            nn.LayerSpec(0, 3)
        with pytest.raises(ValueError):
            nn.LayerSpec(3, 3, "tanh")
        with pytest.raises(ValueError):
            nn.LayerSpec(3, 3, "leaky_relu", slope=1.5)


class TestForward:
    def test_identity_linear_layer(self):
        net = nn.Mlp([nn.Layer(np.eye(3), np.zeros(3), "linear")])
        x = np.array([[1.0, -2.0, 0.5]])
        out, _ = nn.mlp_forward(net, x)
        assert np.array_equal(out, x)

    def test_leaky_relu_negative_side(self):
        net = nn.Mlp([nn.Layer(np.array([[1.0]]), np.zeros(1), "leaky_relu", 0.2)])
        out, _ = nn.mlp_forward(net, np.array([[-1.0]]))
        assert out[0, 0] == pytest.approx(-0.2)

    def test_sigmoid_at_zero(self):
        net = nn.Mlp([nn.Layer(np.array([[1.0]]), np.zeros(1), "sigmoid")])
        out, _ = nn.mlp_forward(net, np.array([[0.0]]))
        assert out[0, 0] == 0.5

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            nn.mlp_forward(small_net(), np.ones((2, 4)))

    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError):
            nn.mlp_forward(small_net(), np.array([[np.nan] * 5]))

    @given(st.integers(0, 7))
    @settings(max_examples=8, deadline=None)
    def test_batch_row_consistency(self, row):
        net = small_net()
        x = np.random.default_rng(11).standard_normal((8, 5))
        batched, _ = nn.mlp_forward(net, x)
        single, _ = nn.mlp_forward(net, x[row : row + 1])
        assert np.allclose(batched[row], single[0], rtol=1e-13, atol=1e-300)


class TestBackward:
    def test_matches_finite_differences(self, rng):
        net = small_net()
        x = rng.standard_normal((4, 5))
        target = rng.standard_normal((4, 3))

        def loss():
            out, _ = nn.mlp_forward(net, x)
            return nn.mse_loss(out, target)[0]

        out, cache = nn.mlp_forward(net, x)
        _, grad_out = nn.mse_loss(out, target)
        grads, _ = nn.mlp_backward(net, cache, grad_out)
        flat = [g for pair in grads for g in pair]
        numeric = central_difference(loss, net.parameter_arrays())
        assert max_relative_error(flat, numeric) < 1e-6

    def test_linear_weight_gradient_is_input(self):
        net = nn.Mlp([nn.Layer(np.array([[2.0]]), np.zeros(1), "linear")])
        x = np.array([[3.0]])
        out, cache = nn.mlp_forward(net, x)
        grads, _ = nn.mlp_backward(net, cache, np.ones_like(out))
        assert grads[0][0][0, 0] == 3.0

    def test_leaky_relu_local_slope(self):
        net = nn.Mlp([nn.Layer(np.array([[1.0]]), np.zeros(1), "leaky_relu", 0.2)])
        out, cache = nn.mlp_forward(net, np.array([[-1.0]]))
        _, dx = nn.mlp_backward(net, cache, np.ones_like(out))
        assert dx[0, 0] == pytest.approx(0.2)

    def test_input_gradient(self, rng):
        net = small_net()
        x = rng.standard_normal((3, 5))
        target = rng.standard_normal((3, 3))
        out, cache = nn.mlp_forward(net, x)
        _, grad_out = nn.mse_loss(out, target)
        _, dx = nn.mlp_backward(net, cache, grad_out)

        def loss():
            out2, _ = nn.mlp_forward(net, x)
            return nn.mse_loss(out2, target)[0]

        numeric = central_difference(loss, [x])
        assert max_relative_error([dx], numeric) < 1e-6

    def test_shape_mismatch_rejected(self, rng):
        net = small_net()
        _, cache = nn.mlp_forward(net, rng.standard_normal((4, 5)))
        with pytest.raises(ValueError):
            nn.mlp_backward(net, cache, np.ones((4, 2)))


class TestAdam:
    def test_first_step_magnitude(self):
        net = nn.Mlp([nn.Layer(np.array([[1.0]]), np.zeros(1), "linear")])
        state = nn.AdamState.for_network(net, learning_rate=1e-4)
        grads = [(np.array([[0.1]]), np.array([0.1]))]
        nn.adam_step(net, grads, state)
        delta = net.layers[0].weights[0, 0] - 1.0
        assert delta == pytest.approx(-1e-4, rel=1e-6)
        assert state.step_count == 1

    def test_zero_gradient_no_move(self):
        net = small_net()
        before = [p.copy() for p in net.parameter_arrays()]
        grads = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]
        state = nn.AdamState.for_network(net)
        nn.adam_step(net, grads, state)
        for b, p in zip(before, net.parameter_arrays()):
            assert np.array_equal(b, p)

    def test_quadratic_descent(self):
        net = nn.Mlp([nn.Layer(np.array([[1.0]]), np.zeros(1), "linear")])
        state = nn.AdamState.for_network(net, learning_rate=1e-2)
        losses = []
        for _ in range(100):
            theta = net.layers[0].weights[0, 0]
            losses.append(theta**2)
            grads = [(np.array([[2.0 * theta]]), np.zeros(1))]
            nn.adam_step(net, grads, state)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_non_finite_gradient_rejected(self):
        net = small_net()
        grads = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]
        grads[0][0][0, 0] = np.inf
        with pytest.raises(ValueError):
            nn.adam_step(net, grads, nn.AdamState.for_network(net))


class TestBce:
    def test_half_predictions_give_ln2(self):
        p = np.full((10, 1), 0.5)
        loss, _ = nn.bce_loss(p, np.ones_like(p))
        assert abs(loss - math.log(2.0)) < 1e-15

    def test_real_plus_fake_at_half_gives_ln4(self):
        p = np.full((300, 1), 0.5)
        real, _ = nn.bce_loss(p, np.ones_like(p))
        fake, _ = nn.bce_loss(p, np.zeros_like(p))
        assert abs(real + fake - math.log(4.0)) < 1e-12

    def test_near_perfect_prediction(self):
        p = np.array([1.0 - nn.BCE_EPS])
        loss, _ = nn.bce_loss(p, np.ones(1))
        assert 0.0 < loss < 1e-6

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            nn.bce_loss(np.array([]), np.array([]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            nn.bce_loss(np.array([0.5, 0.5]), np.array([1.0]))

    def test_gradient_matches_finite_differences(self, rng):
        p = rng.uniform(0.05, 0.95, size=(6, 1))
        y = (rng.random((6, 1)) > 0.5).astype(float)
        _, grad = nn.bce_loss(p, y)
        numeric = central_difference(lambda: nn.bce_loss(p, y)[0], [p], step=1e-6)
        assert max_relative_error([grad], numeric) < 1e-6


class TestMse:
    def test_equal_inputs_zero(self):
        x = np.arange(6.0).reshape(2, 3)
        loss, grad = nn.mse_loss(x, x.copy())
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_small_example(self):
        loss, _ = nn.mse_loss(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
        assert loss == pytest.approx(2.5)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            nn.mse_loss(np.ones((2, 2)), np.ones((2, 3)))

    def test_gradient_matches_finite_differences(self, rng):
        p = rng.standard_normal((4, 3))
        t = rng.standard_normal((4, 3))
        _, grad = nn.mse_loss(p, t)
        numeric = central_difference(lambda: nn.mse_loss(p, t)[0], [p])
        assert max_relative_error([grad], numeric) < 1e-8


def test_serialization_roundtrip():
    net = small_net(seed=9)
    clone = nn.mlp_from_dict(nn.mlp_to_dict(net))
    for a, b in zip(net.layers, clone.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        assert a.activation == b.activation and a.slope == b.slope
