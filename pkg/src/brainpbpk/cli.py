"""Command-line front end.

Subcommands:
  simulate   synthesize a reference concentration-time dataset
  train      inverse-PINN parameter estimation on a dataset
  fit-de     differential-evolution baseline fit
  sweep      activation/layers/neurons hyperparameter sweep
  metrics    PK summary metrics (AUC, Cmax, Tmax, half-life)
  compare    side-by-side table + overlay plots of result summaries

All file outputs are deterministic for identical flags and seed (17
significant digits, no timestamps inside artifact contents).
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import network as nn
from .dataio import (ConcentrationSeries, DataIOError, emit_plot, read_series,
                     write_series)
from .defit import DEConfig, fit_de
from .metrics import write_summaries
from .model import COMPARTMENTS, assemble_matrix
from .params import (ALL_PARAM_NAMES, DrugParams, ModelVariant, SystemParams,
                     reference_value)
from .solvers import PlasmaSpec, SolverError, expm_propagate, synthesize_dataset
from .training import (LossWeights, TrainConfig, TrainingDiverged,
                       default_estimation_spec, train)

DEFAULT_FREE = "Vbb,Vbm,Vccsf,Vscsf,fubb,lam_ccsf"


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_free(arg: str) -> list[str]:
    names = [n.strip() for n in arg.split(",") if n.strip()]
    if not names:
        raise SystemExit("error: --free must name at least one parameter")
    unknown = set(names) - set(ALL_PARAM_NAMES)
    if unknown:
        raise SystemExit(f"error: unknown parameter(s): {sorted(unknown)}")
    return names


def _parse_bounds_scale(arg: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in arg.split(","))
    except ValueError:
        raise SystemExit("error: --bounds-scale expects LO,HI") from None
    if not 0 < lo < hi:
        raise SystemExit("error: --bounds-scale requires 0 < LO < HI")
    return lo, hi


def _load_manifest(data_path: str) -> dict | None:
    manifest = Path(data_path).with_name("manifest.json")
    if manifest.exists():
        with open(manifest, encoding="utf-8") as fh:
            return json.load(fh)
    return None


def _reference_from_manifest(data_path: str) -> dict[str, float]:
    manifest = _load_manifest(data_path)
    if manifest and "parameters" in manifest:
        return dict(manifest["parameters"])
    return {name: reference_value(name) for name in ALL_PARAM_NAMES}


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.points < 2:
        raise SystemExit("error: --points must be >= 2")
    if args.horizon <= 0:
        raise SystemExit("error: --horizon must be positive")
    if args.noise_sd < 0:
        raise SystemExit("error: --noise-sd must be non-negative")
    out = _outdir(args.out)

    sys_p, drug_p = SystemParams(), DrugParams()
    series = synthesize_dataset(sys_p, drug_p, PlasmaSpec(),
                                ModelVariant.PAPER_LITERAL, args.points,
                                args.horizon, args.noise_sd, args.seed)
    write_series(series, out / "dataset.csv")
    manifest = {
        "parameters": {name: reference_value(name) for name in ALL_PARAM_NAMES},
        "points": args.points,
        "horizon": args.horizon,
        "noise_sd": args.noise_sd,
        "seed": args.seed,
        "plasma": dataclasses.asdict(PlasmaSpec()),
        "variant": ModelVariant.PAPER_LITERAL.value,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {out / 'dataset.csv'} ({args.points} rows, "
          f"{args.horizon} h horizon)")
    return 0


# -- train -------------------------------------------------------------------

def _write_summary(out: Path, label: str, names, values, abs_errors,
                   objective: float, seconds: float, prediction: str) -> None:
    summary = {
        "label": label,
        "free": list(names),
        "values": {n: v for n, v in zip(names, values)},
        "abs_errors": {n: e for n, e in zip(names, abs_errors) if e is not None},
        "objective": objective,
        "seconds": round(seconds, 3),
        "prediction": prediction,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)


def cmd_train(args) -> int:
    free_names = _parse_free(args.free)
    bounds = _parse_bounds_scale(args.bounds_scale)
    out = _outdir(args.out)
    try:
        dataset = read_series(args.data)
    except (OSError, DataIOError) as err:
        raise SystemExit(f"error: {err}") from None
    if dataset.plasma is None:
        raise SystemExit("error: dataset must carry a Cplasma column")

    spec = default_estimation_spec(free_names, bounds)
    net_cfg = nn.NetworkConfig(hidden_layers=args.layers, neurons=args.neurons,
                               activation=args.activation,
                               initializer=args.init, seed=args.seed)
    train_cfg = TrainConfig(
        lr=args.lr, iterations=args.iters, lbfgs_iters=args.lbfgs_iters,
        weights=LossWeights(ic=np.full(4, args.weights_ic),
                            ode=np.full(4, args.weights_ode),
                            data=np.full(4, args.weights_data)),
        log_stride=args.log_stride, seed=args.seed)

    try:
        net, final_spec, artifacts = train(dataset, spec, net_cfg, train_cfg)
    except TrainingDiverged as err:
        err.artifacts.write_loss_history(out / "loss_history.csv")
        err.artifacts.write_trajectory(out / "trajectory.csv")
        print(f"error: training aborted: {err}", file=sys.stderr)
        return 1

    artifacts.write_loss_history(out / "loss_history.csv")
    artifacts.write_trajectory(out / "trajectory.csv")
    nn.save_network(net, out / "network.npz")

    horizon = float(dataset.times[-1])
    dense = np.linspace(0.0, horizon, args.prediction_points)
    pred = nn.forward(net, dense / horizon)
    plasma = dataset.plasma_profile()
    from .dataio import linear_interp
    pred_series = ConcentrationSeries(times=dense, Cbb=pred[0], Cbm=pred[1],
                                      Cccsf=pred[2], Cscsf=pred[3],
                                      plasma=linear_interp(plasma, dense))
    write_series(pred_series, out / "prediction.csv")

    reference = _reference_from_manifest(args.data)
    values = final_spec.constrained_values()
    errors = [abs(reference[n] - values[n]) if n in reference else None
              for n in final_spec.names]
    _write_summary(out, "PINN", final_spec.names,
                   [values[n] for n in final_spec.names], errors,
                   artifacts.loss_total[-1], artifacts.wall_seconds,
                   "prediction.csv")
    for name, value in values.items():
        ref = reference.get(name)
        extra = f" (reference {ref:.9g})" if ref is not None else ""
        print(f"{name}: {value:.9g}{extra}")
    print(f"final total loss: {artifacts.loss_total[-1]:.6e} "
          f"({artifacts.wall_seconds:.1f}s)")
    return 0


# -- fit-de ------------------------------------------------------------------

def cmd_fit_de(args) -> int:
    free_names = _parse_free(args.free)
    bounds = _parse_bounds_scale(args.bounds_scale)
    out = _outdir(args.out)
    try:
        dataset = read_series(args.data)
    except (OSError, DataIOError) as err:
        raise SystemExit(f"error: {err}") from None
    if dataset.plasma is None:
        raise SystemExit("error: dataset must carry a Cplasma column")

    spec = default_estimation_spec(free_names, bounds)
    cfg = DEConfig(population=args.population, generations=args.generations,
                   seed=args.seed)
    reference = _reference_from_manifest(args.data)
    try:
        result = fit_de(dataset, spec, cfg, reference=reference)
    except SolverError as err:
        raise SystemExit(f"error: {err}") from None
    result.write_csv(out / "de_result.csv")

    sys_c, drug_c = spec.base_sys, spec.base_drug
    from .params import substitute
    sys_c, drug_c = substitute(sys_c, drug_c,
                               dict(zip(result.names, result.values)))
    A = assemble_matrix(sys_c, drug_c, ModelVariant.PAPER_LITERAL)
    pred = expm_propagate(A, np.zeros(4), dataset.plasma_profile(), sys_c,
                          dataset.times)
    write_series(pred, out / "prediction.csv")
    _write_summary(out, "DE", result.names, list(result.values),
                   result.abs_errors, result.objective, result.wall_seconds,
                   "prediction.csv")
    for name, value, err in zip(result.names, result.values, result.abs_errors):
        extra = f" (abs error {err:.3e})" if err is not None else ""
        print(f"{name}: {value:.9g}{extra}")
    print(f"objective: {result.objective:.6e}, generations: "
          f"{result.generations}, {result.wall_seconds:.1f}s")
    return 0


# -- sweep -------------------------------------------------------------------

def _sweep_cell(payload):
    """One sweep cell; returns 'loss (seconds)' or 'diverged'."""
    (data_path, activation, layers, neurons, iters, seed) = payload
    dataset = read_series(data_path)
    spec = default_estimation_spec(_parse_free(DEFAULT_FREE))
    net_cfg = nn.NetworkConfig(hidden_layers=layers, neurons=neurons,
                               activation=activation, seed=seed,
                               initializer="glorot-uniform")
    train_cfg = TrainConfig(iterations=iters, lbfgs_iters=0,
                            log_stride=max(1, iters // 10), seed=seed)
    start = time.perf_counter()
    try:
        _, _, artifacts = train(dataset, spec, net_cfg, train_cfg)
        loss = artifacts.loss_total[-1]
        return activation, layers, neurons, loss, time.perf_counter() - start
    except TrainingDiverged:
        return activation, layers, neurons, None, time.perf_counter() - start


def cmd_sweep(args) -> int:
    activations = [a.strip() for a in args.activations.split(",") if a.strip()]
    layer_counts = [int(x) for x in args.layers.split(",")]
    neuron_counts = [int(x) for x in args.neurons.split(",")]
    if not activations or not layer_counts or not neuron_counts:
        raise SystemExit("error: empty sweep grid")
    iters = 1000 if args.fast else args.iters
    out = _outdir(args.out)
    if not Path(args.data).exists():
        raise SystemExit(f"error: no such file: {args.data}")

    cells = [(args.data, act, L, N, iters, args.seed)
             for L in layer_counts for act in activations
             for N in neuron_counts]
    jobs = args.jobs or int(os.environ.get("PBPK_IPINN_JOBS", "1"))
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    table = {(act, L, N): (loss, secs)
             for act, L, N, loss, secs in results}
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layers", "activation"] +
                        [f"N={n}" for n in neuron_counts])
        for L in layer_counts:
            for act in activations:
                row = [L, act]
                for N in neuron_counts:
                    loss, secs = table[(act, L, N)]
                    cell = "diverged" if loss is None else \
                        f"{loss:.2e} ({secs:.0f})"
                    row.append(cell)
                writer.writerow(row)
    print(f"wrote {out / 'sweep.csv'} ({len(cells)} cells)")
    return 0


# -- metrics -----------------------------------------------------------------

def cmd_metrics(args) -> int:
    if not 0.0 < args.tail_fraction <= 1.0:
        raise SystemExit("error: --tail-fraction must be in (0, 1]")
    out = _outdir(args.out)
    try:
        dataset = read_series(args.data)
    except (OSError, DataIOError) as err:
        raise SystemExit(f"error: {err}") from None
    write_summaries(dataset, out / "pk_summary.csv", args.tail_fraction)
    print(f"wrote {out / 'pk_summary.csv'}")
    return 0


# -- compare -----------------------------------------------------------------

def cmd_compare(args) -> int:
    if len(args.results) < 2:
        raise SystemExit("error: compare needs at least two result summaries")
    out = _outdir(args.out)
    summaries = []
    for path in args.results:
        try:
            with open(path, encoding="utf-8") as fh:
                summaries.append((Path(path), json.load(fh)))
        except (OSError, json.JSONDecodeError) as err:
            raise SystemExit(f"error: {err}") from None

    names = list(summaries[0][1]["free"])
    header = ["parameter", "reference"]
    for _, s in summaries:
        header += [f"{s['label']}", f"|{s['label']}_err|"]
    with open(out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for name in names:
            row = [name, f"{reference_value(name):.17g}"]
            for _, s in summaries:
                v = s["values"].get(name)
                e = s["abs_errors"].get(name)
                row.append("" if v is None else f"{v:.17g}")
                row.append("" if e is None else f"{e:.17g}")
            writer.writerow(row)

    labeled = []
    if args.data:
        try:
            labeled.append(("observed", read_series(args.data)))
        except (OSError, DataIOError) as err:
            raise SystemExit(f"error: {err}") from None
    for path, s in summaries:
        pred_path = path.parent / s["prediction"]
        if pred_path.exists():
            labeled.append((s["label"], read_series(pred_path)))
    if labeled:
        for comp in COMPARTMENTS:
            emit_plot(labeled, comp, out / f"compare_{comp}.svg")
    print(f"wrote {out / 'compare.csv'} and overlay plots")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brainpbpk",
        description="4-compartment brain PBPK simulation and parameter "
                    "estimation (inverse PINN + differential evolution)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a reference dataset")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--horizon", type=float, default=48.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="inverse-PINN parameter estimation")
    p.add_argument("--data", required=True)
    p.add_argument("--free", default=DEFAULT_FREE)
    p.add_argument("--bounds-scale", default="0.5,2.0")
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--neurons", type=int, default=50)
    p.add_argument("--activation", default="tanh",
                   choices=["tanh", "sigmoid", "relu", "sin"])
    p.add_argument("--init", default="glorot-normal",
                   choices=["glorot-normal", "glorot-uniform"])
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=50_000)
    p.add_argument("--lbfgs-iters", type=int, default=500)
    p.add_argument("--weights-ic", type=float, default=1.0)
    p.add_argument("--weights-ode", type=float, default=2.0)
    p.add_argument("--weights-data", type=float, default=3.0)
    p.add_argument("--log-stride", type=int, default=100)
    p.add_argument("--prediction-points", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-de", help="differential-evolution baseline fit")
    p.add_argument("--data", required=True)
    p.add_argument("--free", default=DEFAULT_FREE)
    p.add_argument("--bounds-scale", default="0.5,2.0")
    p.add_argument("--population", type=int, default=0,
                   help="0 selects 10 x dimension")
    p.add_argument("--generations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_fit_de)

    p = sub.add_parser("sweep", help="hyperparameter sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--activations", default="relu,tanh,sigmoid,sin")
    p.add_argument("--layers", default="1,2,6")
    p.add_argument("--neurons", default="9,18,27,50")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--fast", action="store_true",
                   help="1000 iterations per cell (CI use)")
    p.add_argument("--jobs", type=int, default=0,
                   help="worker pool size; 0 reads PBPK_IPINN_JOBS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="PK summary metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--tail-fraction", type=float, default=0.25)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="compare estimation results")
    p.add_argument("--results", nargs="+", required=True,
                   help="two or more summary.json files")
    p.add_argument("--data", default=None,
                   help="observed dataset to overlay in plots")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
