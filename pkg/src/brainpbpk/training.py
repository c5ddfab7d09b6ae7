"""Inverse-PINN training: composite loss, bounded parameters, Adam, L-BFGS.

Free physical parameters are trained through a sigmoid bounding transform
(value = lo + (hi - lo) * sigmoid(raw)), so they stay strictly inside their
bounds at every iteration. Network weights, biases, and the raw parameter
values are updated jointly by full-batch Adam, optionally followed by an
L-BFGS refinement stage.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import network as nn
from .autodiff import NonFiniteGradient, Var, grad
from .autodiff import sigmoid as ad_sigmoid
from .dataio import ConcentrationSeries, PlasmaProfile, RunArtifacts, linear_interp
from .model import rhs_terms
from .params import (ALL_PARAM_NAMES, DrugParams, ModelVariant, SystemParams,
                     reference_value, substitute)


class TrainingDiverged(Exception):
    def __init__(self, iteration: int, artifacts: RunArtifacts, message: str):
        self.iteration = iteration
        self.artifacts = artifacts
        super().__init__(f"iteration {iteration}: {message}")


@dataclass
class BoundedParam:
    """A free physical parameter with box bounds and an unconstrained raw
    trainable value (raw = 0 maps to the bound midpoint)."""

    name: str
    lo: float
    hi: float
    raw: float = 0.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lower bound must be below upper")

    def constrained(self):
        return constrain(self)


def constrain(p: BoundedParam):
    """lo + (hi - lo) * sigmoid(raw); strictly inside (lo, hi)."""
    return p.lo + (p.hi - p.lo) / (1.0 + math.exp(-p.raw))


def _constrain_var(p: BoundedParam, raw: Var) -> Var:
    return p.lo + (p.hi - p.lo) * ad_sigmoid(raw)


@dataclass
class EstimationSpec:
    """Free parameters plus the fixed values for everything else."""

    free: list[BoundedParam]
    base_sys: SystemParams = field(default_factory=SystemParams)
    base_drug: DrugParams = field(default_factory=DrugParams)

    def __post_init__(self):
        names = [p.name for p in self.free]
        unknown = set(names) - set(ALL_PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown model parameters: {sorted(unknown)}")
        if len(names) != len(set(names)):
            raise ValueError("duplicate free parameter names")

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.free]

    def constrained_values(self) -> dict[str, float]:
        return {p.name: constrain(p) for p in self.free}

    def realized(self):
        """(SystemParams, DrugParams) with constrained free values applied."""
        return substitute(self.base_sys, self.base_drug, self.constrained_values())


DEFAULT_FREE = ("Vbb", "Vbm", "Vccsf", "Vscsf", "fubb", "lam_ccsf")


def default_estimation_spec(free_names=DEFAULT_FREE,
                            bounds_scale=(0.5, 2.0)) -> EstimationSpec:
    """Bounds = reference value x [lo_scale, hi_scale] for each free name."""
    lo_s, hi_s = bounds_scale
    free = [BoundedParam(n, reference_value(n) * lo_s, reference_value(n) * hi_s)
            for n in free_names]
    return EstimationSpec(free=free)


@dataclass(frozen=True)
class LossWeights:
    ic: np.ndarray = field(default_factory=lambda: np.ones(4))
    ode: np.ndarray = field(default_factory=lambda: np.full(4, 2.0))
    data: np.ndarray = field(default_factory=lambda: np.full(4, 3.0))

    def __post_init__(self):
        for name in ("ic", "ode", "data"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            if v.shape != (4,) or np.any(v < 0):
                raise ValueError(f"{name} weights must be 4 non-negative values")
        if not (np.any(self.ic > 0) or np.any(self.ode > 0) or np.any(self.data > 0)):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    iterations: int = 50_000
    lbfgs_iters: int = 500
    extra_collocation: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    log_stride: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0 or self.lbfgs_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.log_stride < 1:
            raise ValueError("log stride must be >= 1")


# -- individual losses (numpy reference versions used in tests) --------------

def data_loss(pred: np.ndarray, obs: np.ndarray, weights: np.ndarray) -> float:
    """Sum over compartments of per-compartment weighted MSE over points."""
    return float(sum(w * np.mean((pred[k] - obs[k]) ** 2)
                     for k, w in enumerate(weights)))


def ic_loss(pred0: np.ndarray, y0: np.ndarray, weights: np.ndarray) -> float:
    return float(sum(w * (pred0[k] - y0[k]) ** 2 for k, w in enumerate(weights)))


def ode_loss(net: nn.Network, spec: EstimationSpec, plasma: PlasmaProfile,
             collocation_times: np.ndarray, horizon: float,
             weights: np.ndarray,
             variant: ModelVariant = ModelVariant.PAPER_LITERAL) -> float:
    """Mean squared ODE residual per equation, lambda-weighted (numpy path)."""
    t = np.asarray(collocation_times, dtype=float)
    Y, Ydot_hat = nn.forward_with_time_derivative(net, t / horizon)
    dYdt = Ydot_hat / horizon
    cart = linear_interp(plasma, t)
    sys_r, drug_r = spec.realized()
    F = rhs_terms((Y[0], Y[1], Y[2], Y[3]), cart, sys_r, drug_r, variant)
    return float(sum(w * np.mean((dYdt[k] - F[k]) ** 2)
                     for k, w in enumerate(weights)))


# -- composite tape loss -----------------------------------------------------

@dataclass
class _Problem:
    """Precomputed constants shared by every loss evaluation."""

    cfg: nn.NetworkConfig
    spec: EstimationSpec
    variant: ModelVariant
    horizon: float
    data_that: np.ndarray
    obs: np.ndarray
    y0: np.ndarray
    colloc_that: np.ndarray
    cart_colloc: np.ndarray
    weights: LossWeights
    data_is_colloc: bool


def _composite_loss(prob: _Problem, weight_vars, bias_vars, raw_vars):
    """Build the full loss graph; returns (total Var, component floats)."""
    w = prob.weights
    need_ode = bool(np.any(w.ode))

    if need_ode:
        Yc, Ycdot_hat = nn.forward_dual_tape(prob.cfg, weight_vars, bias_vars,
                                             prob.colloc_that)
    else:
        Yc = nn.forward_tape(prob.cfg, weight_vars, bias_vars, prob.colloc_that)
    if prob.data_is_colloc:
        Yd = Yc
    else:
        Yd = nn.forward_tape(prob.cfg, weight_vars, bias_vars, prob.data_that)

    l_ode = 0.0
    if need_ode:
        constrained = {p.name: _constrain_var(p, rv)
                       for p, rv in zip(prob.spec.free, raw_vars)}
        sys_r, drug_r = substitute(prob.spec.base_sys, prob.spec.base_drug,
                                   constrained)
        rows_c = [Yc[k] for k in range(4)]
        drows = [Ycdot_hat[k] * (1.0 / prob.horizon) for k in range(4)]
        F = rhs_terms(rows_c, prob.cart_colloc, sys_r, drug_r, prob.variant)
        for k in range(4):
            if w.ode[k]:
                l_ode = l_ode + float(w.ode[k]) * ((drows[k] - F[k]) ** 2).mean()

    l_data = 0.0
    for k in range(4):
        if w.data[k]:
            resid = Yd[k] - prob.obs[k]
            l_data = l_data + float(w.data[k]) * (resid ** 2).mean()

    l_ic = 0.0
    for k in range(4):
        if w.ic[k]:
            r0 = Yd[k, 0] - prob.y0[k]
            l_ic = l_ic + float(w.ic[k]) * r0 ** 2

    total = l_data + l_ode + l_ic
    comp = tuple(x.item() if isinstance(x, Var) else float(x)
                 for x in (l_data, l_ode, l_ic))
    return total, comp


def build_problem(dataset: ConcentrationSeries, spec: EstimationSpec,
                  net_cfg: nn.NetworkConfig, train_cfg: TrainConfig,
                  variant: ModelVariant = ModelVariant.PAPER_LITERAL) -> _Problem:
    plasma = dataset.plasma_profile()
    times = dataset.times
    horizon = float(times[-1])
    colloc = times
    if train_cfg.extra_collocation > 0:
        extra = np.linspace(times[0], horizon, train_cfg.extra_collocation + 2)[1:-1]
        colloc = np.unique(np.concatenate([times, extra]))
    data_is_colloc = colloc.size == times.size and np.array_equal(colloc, times)
    return _Problem(
        cfg=net_cfg, spec=spec, variant=variant, horizon=horizon,
        data_that=times / horizon, obs=dataset.concentrations(),
        y0=dataset.concentrations()[:, 0],
        colloc_that=colloc / horizon,
        cart_colloc=linear_interp(plasma, colloc),
        weights=train_cfg.weights, data_is_colloc=data_is_colloc)


# -- optimizers --------------------------------------------------------------

class AdamState:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8), bias-corrected."""

    def __init__(self, arrays, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays, grads, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("adam-step")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            a -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(state: AdamState, arrays, grads, lr: float) -> None:
    state.step(arrays, grads, lr)


@dataclass
class LBFGSResult:
    x: np.ndarray
    fval: float
    iterations: int
    line_search_failed: bool = False


def lbfgs_refine(loss_and_grad, x0: np.ndarray, max_iters: int,
                 tolerance: float = 1e-12, history: int = 10,
                 callback=None) -> LBFGSResult:
    """Two-loop-recursion L-BFGS with Armijo backtracking; returns the best
    point ever seen, so the loss never increases relative to the start."""
    x = np.asarray(x0, dtype=float).copy()
    f, g = loss_and_grad(x)
    best_x, best_f = x.copy(), f
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    failed = False
    it = 0
    while it < max_iters:
        if np.linalg.norm(g) <= tolerance:
            break
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_hist), reversed(y_hist)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        if y_hist:
            y_last, s_last = y_hist[-1], s_hist[-1]
            q *= (s_last @ y_last) / (y_last @ y_last)
        for a, rho, s, y in reversed(alphas):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        if d @ g >= 0:  # not a descent direction; reset to steepest descent
            d = -g
            s_hist.clear()
            y_hist.clear()

        step = 1.0
        gd = g @ d
        accepted = False
        for _ in range(30):
            x_new = x + step * d
            f_new, g_new = loss_and_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * gd:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            failed = True
            break
        s_vec = x_new - x
        y_vec = g_new - g
        if s_vec @ y_vec > 1e-16:
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            if len(s_hist) > history:
                s_hist.pop(0)
                y_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()
        if callback is not None:
            callback(it, f, x)
    return LBFGSResult(best_x, best_f, it, failed)


# -- training loop -----------------------------------------------------------

_DIVERGENCE_CAP = 1e8


def _pack(arrays) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def _unpack(flat: np.ndarray, templates) -> list[np.ndarray]:
    out, i = [], 0
    for t in templates:
        out.append(flat[i:i + t.size].reshape(t.shape))
        i += t.size
    return out


def train(dataset: ConcentrationSeries, spec: EstimationSpec,
          net_cfg: nn.NetworkConfig, train_cfg: TrainConfig,
          variant: ModelVariant = ModelVariant.PAPER_LITERAL):
    """Adam on the composite loss, then optional L-BFGS refinement.

    Returns (trained Network, EstimationSpec with final raw values,
    RunArtifacts). Deterministic under the configured seeds.
    """
    t_start = time.perf_counter()
    prob = build_problem(dataset, spec, net_cfg, train_cfg, variant)
    net = nn.init_network(net_cfg)
    arrays = net.parameter_arrays()
    raws = [np.asarray(float(p.raw)) for p in spec.free]
    all_arrays = arrays + raws
    n_wb = len(arrays)

    artifacts = RunArtifacts(param_names=spec.names)

    def eval_loss(arrs):
        leaves = [Var(a, op=f"param{i}") for i, a in enumerate(arrs)]
        total, comp = _composite_loss(prob, leaves[:len(net.weights)],
                                      leaves[len(net.weights):n_wb],
                                      leaves[n_wb:])
        return total, comp, leaves

    def current_spec(arrs) -> EstimationSpec:
        free = [replace(p, raw=float(r)) for p, r in zip(spec.free, arrs[n_wb:])]
        return EstimationSpec(free=free, base_sys=spec.base_sys,
                              base_drug=spec.base_drug)

    def log(iteration, comp, arrs):
        ld, lo, li = comp
        values = list(current_spec(arrs).constrained_values().values())
        artifacts.log(iteration, ld, lo, li, ld + lo + li, values)

    adam = AdamState(all_arrays)
    try:
        total, comp, leaves = eval_loss(all_arrays)
        log(0, comp, all_arrays)
        for it in range(1, train_cfg.iterations + 1):
            if not np.isfinite(total.value) or total.item() > _DIVERGENCE_CAP:
                raise TrainingDiverged(it - 1, artifacts, "loss diverged")
            grads = grad(total, leaves)
            adam.step(all_arrays, grads, train_cfg.lr)
            total, comp, leaves = eval_loss(all_arrays)
            if it % train_cfg.log_stride == 0 or it == train_cfg.iterations:
                log(it, comp, all_arrays)
    except NonFiniteGradient as err:
        raise TrainingDiverged(adam.t, artifacts, str(err)) from err

    base_iter = train_cfg.iterations
    if train_cfg.lbfgs_iters > 0:
        templates = all_arrays

        def loss_and_grad(flat):
            arrs = _unpack(flat, templates)
            total, _, leaves = eval_loss(arrs)
            return total.item(), _pack(grad(total, leaves))

        logged = []

        def cb(it, f, x):
            if it % train_cfg.log_stride == 0:
                logged.append((it, x.copy()))

        result = lbfgs_refine(loss_and_grad, _pack(all_arrays),
                              train_cfg.lbfgs_iters, callback=cb)
        for it, x in logged:
            arrs = _unpack(x, templates)
            _, comp, _ = eval_loss(arrs)
            log(base_iter + it, comp, arrs)
        all_arrays = _unpack(result.x, templates)
        _, comp, _ = eval_loss(all_arrays)
        if not artifacts.loss_iters or \
                artifacts.loss_iters[-1] < base_iter + result.iterations + 1:
            log(base_iter + result.iterations + 1, comp, all_arrays)

    final_net = nn.Network(net_cfg, [np.asarray(a) for a in all_arrays[:len(net.weights)]],
                           [np.asarray(a) for a in all_arrays[len(net.weights):n_wb]])
    final_spec = current_spec(all_arrays)
    artifacts.wall_seconds = time.perf_counter() - t_start
    return final_net, final_spec, artifacts
