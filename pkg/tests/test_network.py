import numpy as np
import pytest

from brainpbpk.autodiff import Var, backward
from brainpbpk.network import (ACTIVATIONS, Network, NetworkConfig,
                               forward, forward_dual_tape, forward_tape,
                               forward_with_time_derivative, init_network,
                               load_network, save_network)


def wrap(net):
    ws = [Var(w) for w in net.weights]
    bs = [Var(b) for b in net.biases]
    return ws, bs


class TestInit:
    def test_shapes(self):
        net = init_network(NetworkConfig(hidden_layers=3, neurons=7))
        assert [w.shape for w in net.weights] == \
            [(7, 1), (7, 7), (7, 7), (4, 7)]
        assert all(b.shape == (w.shape[0], 1)
                   for w, b in zip(net.weights, net.biases))

    def test_biases_zero(self):
        net = init_network(NetworkConfig())
        assert all(np.all(b == 0.0) for b in net.biases)

    def test_seed_determinism(self):
        a = init_network(NetworkConfig(seed=3))
        b = init_network(NetworkConfig(seed=3))
        c = init_network(NetworkConfig(seed=4))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        assert not all(np.array_equal(x, y)
                       for x, y in zip(a.weights, c.weights))

    def test_glorot_uniform_bounds(self):
        cfg = NetworkConfig(hidden_layers=2, neurons=50,
                            initializer="glorot-uniform", seed=0)
        net = init_network(cfg)
        W = net.weights[1]  # 50 x 50
        limit = np.sqrt(6.0 / 100)
        assert np.all(np.abs(W) <= limit)
        assert np.std(W) == pytest.approx(limit / np.sqrt(3), rel=0.1)

    def test_glorot_normal_spread(self):
        cfg = NetworkConfig(hidden_layers=2, neurons=50,
                            initializer="glorot-normal", seed=0)
        W = init_network(cfg).weights[1]
        assert np.std(W) == pytest.approx(np.sqrt(2.0 / 100), rel=0.1)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            NetworkConfig(hidden_layers=0)
        with pytest.raises(ValueError):
            NetworkConfig(activation="cosine")
        with pytest.raises(ValueError):
            NetworkConfig(initializer="he")
        with pytest.raises(ValueError):
            NetworkConfig(omega=0.0)


class TestForward:
    def test_output_shape(self):
        net = init_network(NetworkConfig(hidden_layers=2, neurons=5))
        assert forward(net, np.linspace(0, 1, 9)).shape == (4, 9)
        assert forward(net, 0.5).shape == (4, 1)

    def test_linear_by_hand(self):
        # one hidden relu neuron with hand-set weights: y = 2*relu(3t+1) + 4
        cfg = NetworkConfig(hidden_layers=1, neurons=1, activation="relu")
        net = Network(cfg, [np.array([[3.0]]),
                            np.full((4, 1), 2.0)],
                      [np.array([[1.0]]), np.full((4, 1), 4.0)])
        t = np.array([-1.0, 0.0, 1.0])
        expected = 2.0 * np.maximum(3.0 * t + 1.0, 0.0) + 4.0
        assert np.allclose(forward(net, t), expected)

    @pytest.mark.parametrize("act", ACTIVATIONS)
    def test_tape_matches_numpy_bitwise(self, act):
        net = init_network(NetworkConfig(hidden_layers=3, neurons=8,
                                         activation=act, seed=1))
        t = np.linspace(0, 1, 11)
        ws, bs = wrap(net)
        tape_out = forward_tape(net.config, ws, bs, t)
        assert np.array_equal(tape_out.value, forward(net, t))

    @pytest.mark.parametrize("act", ACTIVATIONS)
    def test_dual_tape_matches_numpy_bitwise(self, act):
        net = init_network(NetworkConfig(hidden_layers=2, neurons=6,
                                         activation=act, seed=2))
        t = np.linspace(0, 1, 7)
        y_np, dy_np = forward_with_time_derivative(net, t)
        ws, bs = wrap(net)
        y_tp, dy_tp = forward_dual_tape(net.config, ws, bs, t)
        assert np.array_equal(y_tp.value, y_np)
        assert np.array_equal(dy_tp.value, dy_np)


class TestTimeDerivative:
    @pytest.mark.parametrize("act", ["tanh", "sigmoid", "sin"])
    def test_matches_finite_differences(self, act):
        net = init_network(NetworkConfig(hidden_layers=3, neurons=10,
                                         activation=act, omega=2.0, seed=0))
        t = np.linspace(0.05, 0.95, 9)
        _, dy = forward_with_time_derivative(net, t)
        eps = 1e-6
        fd = (forward(net, t + eps) - forward(net, t - eps)) / (2 * eps)
        assert np.max(np.abs(dy - fd)) < 1e-7

    def test_relu_derivative_piecewise(self):
        net = init_network(NetworkConfig(hidden_layers=2, neurons=10,
                                         activation="relu", seed=3))
        t = np.linspace(0.1, 0.9, 5)
        _, dy = forward_with_time_derivative(net, t)
        eps = 1e-7
        fd = (forward(net, t + eps) - forward(net, t - eps)) / (2 * eps)
        assert np.max(np.abs(dy - fd)) < 1e-5

    def test_gradient_through_derivative(self):
        # loss built on dY/dt must still match FD in the weights
        cfg = NetworkConfig(hidden_layers=2, neurons=4, activation="tanh",
                            seed=5)
        net = init_network(cfg)
        t = np.linspace(0, 1, 6)

        def loss_value(nets):
            _, dy = forward_with_time_derivative(nets, t)
            return float(np.mean(dy ** 2))

        ws, bs = wrap(net)
        _, dy = forward_dual_tape(cfg, ws, bs, t)
        backward((dy * dy).mean())

        eps = 1e-6
        for li in range(len(net.weights)):
            W = net.weights[li]
            idx = (0, 0)
            pert = net.copy()
            pert.weights[li][idx] += eps
            up = loss_value(pert)
            pert = net.copy()
            pert.weights[li][idx] -= eps
            down = loss_value(pert)
            fd = (up - down) / (2 * eps)
            assert ws[li].grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = init_network(NetworkConfig(hidden_layers=2, neurons=9,
                                         activation="sin", omega=3.0, seed=7))
        path = tmp_path / "net.npz"
        save_network(net, path)
        back = load_network(path)
        assert back.config == net.config
        t = np.linspace(0, 1, 5)
        assert np.array_equal(forward(back, t), forward(net, t))
