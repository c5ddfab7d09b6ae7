import numpy as np
import pytest

from brainpbpk import network as nn
from brainpbpk.autodiff import Var, grad
from brainpbpk.params import DrugParams, SystemParams, reference_value
from brainpbpk.solvers import synthesize_dataset
from brainpbpk.training import (AdamState, BoundedParam, EstimationSpec,
                                LossWeights, TrainConfig, TrainingDiverged,
                                _composite_loss, build_problem, constrain,
                                data_loss, default_estimation_spec, ic_loss,
                                lbfgs_refine, ode_loss, train)


def small_dataset(n=20):
    return synthesize_dataset(SystemParams(), DrugParams(), n_points=n,
                              horizon=48.0)


class TestBoundedParam:
    def test_midpoint_at_zero_raw(self):
        p = BoundedParam("Vbb", 1.0, 3.0)
        assert constrain(p) == pytest.approx(2.0)

    def test_strictly_inside_bounds(self):
        p = BoundedParam("Vbb", 1.0, 3.0)
        for raw in (-30.0, -5.0, 0.0, 5.0, 30.0):
            v = constrain(BoundedParam("Vbb", 1.0, 3.0, raw=raw))
            assert 1.0 < v < 3.0

    def test_monotone_in_raw(self):
        vals = [constrain(BoundedParam("x", 0.0, 1.0, raw=r))
                for r in np.linspace(-4, 4, 9)]
        assert np.all(np.diff(vals) > 0)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError):
            BoundedParam("Vbb", 2.0, 2.0)


class TestEstimationSpec:
    def test_default_free_set_and_bounds(self):
        spec = default_estimation_spec()
        assert spec.names == ["Vbb", "Vbm", "Vccsf", "Vscsf", "fubb",
                              "lam_ccsf"]
        for p in spec.free:
            ref = reference_value(p.name)
            assert p.lo == pytest.approx(0.5 * ref)
            assert p.hi == pytest.approx(2.0 * ref)
            assert p.raw == 0.0

    def test_realized_substitutes_free_values(self):
        spec = default_estimation_spec(free_names=("Vbb",))
        s, d = spec.realized()
        assert s.Vbb == pytest.approx(constrain(spec.free[0]))
        assert s.Vbm == SystemParams().Vbm

    def test_unknown_or_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            EstimationSpec(free=[BoundedParam("bogus", 0, 1)])
        with pytest.raises(ValueError):
            EstimationSpec(free=[BoundedParam("Vbb", 0, 1),
                                 BoundedParam("Vbb", 0, 2)])


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert np.array_equal(w.ic, np.ones(4))
        assert np.array_equal(w.ode, np.full(4, 2.0))
        assert np.array_equal(w.data, np.full(4, 3.0))

    def test_rejects_negative_and_all_zero(self):
        with pytest.raises(ValueError):
            LossWeights(ic=[-1, 0, 0, 0])
        with pytest.raises(ValueError):
            LossWeights(ic=np.zeros(4), ode=np.zeros(4), data=np.zeros(4))


class TestReferenceLosses:
    def test_data_loss_by_hand(self):
        pred = np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        obs = np.zeros((4, 2))
        # MSE of row 0 is (1+4)/2 = 2.5, weight 3 -> 7.5
        w = np.array([3.0, 0.0, 0.0, 0.0])
        assert data_loss(pred, obs, w) == pytest.approx(7.5)

    def test_ic_loss_by_hand(self):
        pred0 = np.array([0.1, 0.0, 0.0, 0.0])
        y0 = np.zeros(4)
        assert ic_loss(pred0, y0, np.array([2.0, 1, 1, 1])) == \
            pytest.approx(0.02)

    def test_ode_loss_zero_for_exact_derivative(self):
        # hand-built network emitting constants has dY/dt = 0; with the
        # zero state and zero plasma the residual vanishes exactly
        cfg = nn.NetworkConfig(hidden_layers=1, neurons=1, activation="tanh")
        net = nn.Network(cfg, [np.zeros((1, 1)), np.zeros((4, 1))],
                         [np.zeros((1, 1)), np.zeros((4, 1))])
        spec = default_estimation_spec()
        ds = small_dataset()
        zero_plasma = ds.plasma_profile()
        zero_plasma = type(zero_plasma)(zero_plasma.times,
                                        np.zeros_like(zero_plasma.values))
        out = ode_loss(net, spec, zero_plasma, ds.times, 48.0, np.ones(4))
        assert out == 0.0


class TestCompositeLoss:
    def build(self, weights=None, n=10):
        ds = small_dataset(n)
        spec = default_estimation_spec()
        cfg = nn.NetworkConfig(hidden_layers=2, neurons=6, seed=0)
        tc = TrainConfig(weights=weights or LossWeights())
        prob = build_problem(ds, spec, cfg, tc)
        net = nn.init_network(cfg)
        ws = [Var(w) for w in net.weights]
        bs = [Var(b) for b in net.biases]
        rs = [Var(np.asarray(0.0)) for _ in spec.free]
        return prob, net, spec, ds, ws, bs, rs

    def test_total_is_sum_of_components(self):
        prob, _, _, _, ws, bs, rs = self.build()
        total, (ld, lo, li) = _composite_loss(prob, ws, bs, rs)
        assert total.item() == pytest.approx(ld + lo + li, rel=1e-12)

    def test_components_match_numpy_references(self):
        prob, net, spec, ds, ws, bs, rs = self.build()
        _, (ld, lo, li) = _composite_loss(prob, ws, bs, rs)
        w = LossWeights()
        pred = nn.forward(net, ds.times / 48.0)
        assert ld == pytest.approx(
            data_loss(pred, ds.concentrations(), w.data), rel=1e-12)
        assert li == pytest.approx(
            ic_loss(pred[:, 0], ds.concentrations()[:, 0], w.ic), rel=1e-12)
        assert lo == pytest.approx(
            ode_loss(net, spec, ds.plasma_profile(), ds.times, 48.0, w.ode),
            rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        prob, _, spec, _, ws, bs, rs = self.build(n=8)
        total, _ = _composite_loss(prob, ws, bs, rs)
        gs = grad(total, ws + bs + rs)

        def value(raw_shift, which):
            rs2 = [Var(np.asarray(raw_shift if i == which else 0.0))
                   for i in range(len(rs))]
            t2, _ = _composite_loss(prob, [Var(w.value) for w in ws],
                                    [Var(b.value) for b in bs], rs2)
            return t2.item()

        eps = 1e-6
        for i in range(len(rs)):
            fd = (value(eps, i) - value(-eps, i)) / (2 * eps)
            # central differences lose accuracy when the component is
            # tiny relative to the total loss, hence the absolute floor
            assert gs[len(ws) + len(bs) + i] == \
                pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_zero_ode_weight_skips_residual(self):
        w = LossWeights(ode=np.zeros(4))
        prob, _, _, _, ws, bs, rs = self.build(weights=w)
        _, (ld, lo, li) = _composite_loss(prob, ws, bs, rs)
        assert lo == 0.0 and ld > 0.0


class TestAdam:
    def test_quadratic_convergence(self):
        x = [np.array([5.0])]
        state = AdamState(x)
        for _ in range(2000):
            g = [2.0 * x[0]]
            state.step(x, g, lr=0.05)
        assert abs(x[0][0]) < 1e-3

    def test_first_step_size_is_lr(self):
        # bias correction makes the very first update ~lr in magnitude
        x = [np.array([1.0])]
        AdamState(x).step(x, [np.array([123.0])], lr=0.01)
        assert x[0][0] == pytest.approx(1.0 - 0.01, abs=1e-6)

    def test_in_place_update(self):
        x = [np.array([1.0, 2.0])]
        ref = x[0]
        AdamState(x).step(x, [np.ones(2)], lr=0.1)
        assert x[0] is ref


class TestLbfgs:
    def test_rosenbrock(self):
        def fg(x):
            a, b = x
            f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
            g = np.array([-2 * (1 - a) - 400 * a * (b - a * a),
                          200 * (b - a * a)])
            return f, g
        res = lbfgs_refine(fg, np.array([-1.2, 1.0]), max_iters=1000)
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-5)

    def test_quadratic_exact_in_few_iters(self):
        H = np.diag([1.0, 10.0, 100.0])

        def fg(x):
            return 0.5 * x @ H @ x, H @ x
        res = lbfgs_refine(fg, np.ones(3), max_iters=50)
        assert res.fval < 1e-15

    def test_never_worse_than_start(self):
        def fg(x):
            return float(np.sin(5 * x[0]) + x[0] ** 2), \
                np.array([5 * np.cos(5 * x[0]) + 2 * x[0]])
        start_f = fg(np.array([2.0]))[0]
        res = lbfgs_refine(fg, np.array([2.0]), max_iters=20)
        assert res.fval <= start_f


class TestTrain:
    def test_short_run_decreases_loss_and_logs(self):
        ds = small_dataset(15)
        spec = default_estimation_spec()
        cfg = nn.NetworkConfig(hidden_layers=2, neurons=8, seed=0)
        tc = TrainConfig(lr=1e-3, iterations=60, lbfgs_iters=0, log_stride=20)
        net, fspec, art = train(ds, spec, cfg, tc)
        assert art.loss_iters[0] == 0 and art.loss_iters[-1] == 60
        assert art.loss_total[-1] < art.loss_total[0]
        # parameters stayed strictly inside their boxes
        for row in art.trajectory:
            for p, v in zip(spec.free, row):
                assert p.lo < v < p.hi

    def test_logged_total_equals_component_sum(self):
        ds = small_dataset(12)
        spec = default_estimation_spec()
        cfg = nn.NetworkConfig(hidden_layers=1, neurons=5, seed=1)
        tc = TrainConfig(lr=1e-3, iterations=30, lbfgs_iters=5, log_stride=10)
        _, _, art = train(ds, spec, cfg, tc)
        for i in range(len(art.loss_iters)):
            assert art.loss_total[i] == pytest.approx(
                art.loss_data[i] + art.loss_ode[i] + art.loss_ic[i], rel=1e-12)

    def test_deterministic_under_seed(self):
        ds = small_dataset(10)
        cfg = nn.NetworkConfig(hidden_layers=1, neurons=4, seed=2)
        tc = TrainConfig(lr=1e-3, iterations=25, lbfgs_iters=0)
        out1 = train(ds, default_estimation_spec(), cfg, tc)
        out2 = train(ds, default_estimation_spec(), cfg, tc)
        assert out1[2].loss_total == out2[2].loss_total
        assert np.array_equal(out1[0].weights[0], out2[0].weights[0])

    def test_divergence_raises_with_artifacts(self):
        ds = small_dataset(10)
        spec = default_estimation_spec()
        cfg = nn.NetworkConfig(hidden_layers=2, neurons=8, seed=0)
        tc = TrainConfig(lr=50.0, iterations=3000, lbfgs_iters=0,
                         log_stride=1)
        with pytest.raises(TrainingDiverged) as err:
            train(ds, spec, cfg, tc)
        assert len(err.value.artifacts.loss_iters) > 0

    def test_lbfgs_stage_extends_iteration_numbers(self):
        ds = small_dataset(10)
        cfg = nn.NetworkConfig(hidden_layers=1, neurons=4, seed=0)
        tc = TrainConfig(lr=1e-3, iterations=20, lbfgs_iters=10, log_stride=5)
        _, _, art = train(ds, default_estimation_spec(), cfg, tc)
        assert art.loss_iters[-1] > 20
        assert np.all(np.diff(art.loss_iters) > 0)
