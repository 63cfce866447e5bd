"""Config-driven experiment runner.

Subcommands:
  run    <config.toml|json>   dataset -> particle flow -> metrics/snapshots
  field  --activation ...     2D discriminator-gradient field (CSV + SVG)
  kernel --points file        Gram matrix with spectral diagnostics
  eval   <cloudA> <cloudB>    Sinkhorn divergence between two point clouds
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import measures
from .config import ExperimentConfig
from .dynamics import LossSpec
from .flow import FlowConfig, gradient_field_2d, run_flow, sigmoid_eta
from .kernels import SingularKernelPointError, gram
from .measures import EmpiricalMeasure
from .sinkhorn import SinkhornConfig, sinkhorn_divergence
from .svg import svg_quiver, svg_scatter_trajectory

__all__ = ["main", "cmd_run", "cmd_field", "cmd_kernel", "cmd_eval"]


def _build_dataset(cfg: ExperimentConfig):
    ds = cfg.dataset
    if ds.name == "8gaussians":
        return measures.sample_8gaussians(ds.count, ds.seed)
    rng = np.random.Generator(np.random.PCG64(ds.seed + 1))
    if ds.name == "image":
        if ds.path == "ring":
            raster = measures.ring_raster()
        elif ds.path == "two_blob":
            raster = measures.two_blob_raster()
        else:
            raster = ds.path
        target = measures.sample_image_density(raster, ds.count, ds.seed)
        source = EmpiricalMeasure.uniform(rng.standard_normal((ds.count, 2)))
        return source, target
    target = measures.load_mnist(ds.path, ds.count, ds.seed)
    source = EmpiricalMeasure.uniform(rng.standard_normal((ds.count, 1024)))
    return source, target


def _flow_config(cfg: ExperimentConfig, seed: int) -> FlowConfig:
    fl = cfg.flow
    fc = FlowConfig(
        loss=LossSpec(fl.loss),
        regime=fl.regime,
        eta=fl.eta,
        steps=fl.steps,
        tau=fl.tau,
        inner_lr=fl.inner_lr,
        inner_steps=fl.inner_steps,
        snapshot_every=fl.snapshot_every,
        seed=seed,
        width=fl.width,
    )
    if cfg.kernel.variant != "rbf" and cfg.kernel.activation == "sigmoid_quadrature":
        fc = sigmoid_eta(fc)
    return fc


def _write_metrics(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "sinkhorn", "wall_time"])
        writer.writerows(rows)


def cmd_run(config_path, out_override=None, repeats_override=None, seed_override=None):
    try:
        cfg = ExperimentConfig.load(config_path)
    except (TypeError, ValueError, KeyError) as exc:
        print(f"invalid config {config_path}: {exc}", file=sys.stderr)
        return 2
    if out_override:
        cfg = replace(cfg, out_dir=str(out_override))
    if repeats_override:
        cfg = replace(cfg, repeats=int(repeats_override))
    if seed_override is not None:
        cfg = replace(cfg, seed=int(seed_override))
    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.toml")  # provenance sidecar
    skcfg = cfg.sinkhorn.config()
    kernel_or_net = (
        cfg.kernel.spec() if cfg.flow.regime == "infinite" else cfg.kernel.network()
    )
    finals = []
    status = 0
    for rep in range(cfg.repeats):
        rep_dir = out / f"run_{rep}"
        rep_dir.mkdir(exist_ok=True)
        seed = cfg.seed + rep
        data_cfg = replace(cfg, dataset=replace(cfg.dataset, seed=cfg.dataset.seed + rep))
        source, target = _build_dataset(data_cfg)
        t0 = time.perf_counter()
        rows = []

        def evaluator(particles, tgt):
            value = sinkhorn_divergence(particles, tgt, skcfg)
            rows.append(time.perf_counter() - t0)
            return value

        try:
            state = run_flow(source, target, kernel_or_net, _flow_config(cfg, seed), evaluator)
        except ArithmeticError as exc:
            print(f"run {rep} diverged: {exc}", file=sys.stderr)
            _write_metrics(rep_dir / "metrics.csv", [])
            status = 1
            continue
        metrics = [
            (step, val, wall) for (step, val), wall in zip(state.history, rows)
        ]
        _write_metrics(rep_dir / "metrics.csv", metrics)
        snaps = [
            {"step": step, "points": pts.tolist()} for step, pts in state.snapshots
        ]
        (rep_dir / "snapshots.json").write_text(json.dumps(snaps))
        if target.dim == 2:
            svg_scatter_trajectory(
                rep_dir / "trajectory.svg", state.snapshots, target.points
            )
        finals.append(state.history[-1][1])
    if finals:
        summary = {
            "name": cfg.name,
            "repeats": len(finals),
            "final_sinkhorn_mean": float(np.mean(finals)),
            "final_sinkhorn_std": float(np.std(finals)),
            "final_sinkhorn_values": finals,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
        mean, std = summary["final_sinkhorn_mean"], summary["final_sinkhorn_std"]
        print(f"{cfg.name}: final sinkhorn {mean:.3e} +/- {std:.3e}")
    return status


def _kernel_from_args(args):
    from .config import KernelConfig

    return KernelConfig(
        variant=args.variant,
        activation=args.activation,
        hidden_layers=args.hidden_layers,
        weight_variance=args.weight_variance,
        bias_variance=args.bias_variance,
    ).spec()


def cmd_field(args):
    spec = _kernel_from_args(args)
    loss = LossSpec(args.loss)
    x0 = np.asarray(json.loads(args.x0), dtype=float)
    y = np.asarray(json.loads(args.y), dtype=float)
    if np.linalg.norm(y) == 0:
        print("invalid frame: y must be nonzero", file=sys.stderr)
        return 2
    field = gradient_field_2d(
        spec,
        loss,
        x0,
        y,
        resolution=args.resolution,
        extent=tuple(args.extent),
        tau=args.tau,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "field.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "g_u", "g_v"])
        for row in zip(
            field.u.ravel(), field.v.ravel(), field.gu.ravel(), field.gv.ravel()
        ):
            writer.writerow([f"{x:.12g}" for x in row])
    # target y sits at frame coordinates (1, 0)
    svg_quiver(out / "field.svg", field.u, field.v, field.gu, field.gv, marker=(1.0, 0.0))
    if field.singular_count:
        print(f"singular points on grid: {field.singular_count}")
    return 0


def cmd_kernel(args):
    spec = _kernel_from_args(args)
    try:
        text = Path(args.points).read_text()
    except OSError as exc:
        print(f"cannot read points file: {exc}", file=sys.stderr)
        return 2
    pts = _parse_cloud(text)
    k = gram(spec, pts, pts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "gram.csv", k, delimiter=",")
    eig = np.linalg.eigvalsh(k)
    diag = {
        "size": int(k.shape[0]),
        "min_eigenvalue": float(eig[0]),
        "max_eigenvalue": float(eig[-1]),
        "trace": float(np.trace(k)),
        "condition_number": float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf"),
    }
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2))
    print(json.dumps(diag))
    return 0


def _parse_cloud(text: str) -> np.ndarray:
    text = text.strip()
    if text.startswith("["):
        return np.asarray(json.loads(text), dtype=float)
    return np.loadtxt(text.splitlines(), ndmin=2)


def cmd_eval(args):
    a = EmpiricalMeasure.uniform(_parse_cloud(Path(args.cloud_a).read_text()))
    b = EmpiricalMeasure.uniform(_parse_cloud(Path(args.cloud_b).read_text()))
    cfg = SinkhornConfig(blur=args.blur, scaling=args.scaling)
    value = sinkhorn_divergence(a, b, cfg)
    print(f"{value:.12e}")
    return 0


def _add_kernel_args(p):
    p.add_argument("--variant", default="ntk", choices=["ntk", "nngp", "rbf"])
    p.add_argument(
        "--activation",
        default="relu",
        choices=["relu", "erf", "sigmoid_quadrature", "identity"],
    )
    p.add_argument("--hidden-layers", type=int, default=3, dest="hidden_layers")
    p.add_argument("--weight-variance", type=float, default=1.0, dest="weight_variance")
    p.add_argument("--bias-variance", type=float, default=1.0, dest="bias_variance")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ntkgan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config-driven flow experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--repeats", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--deterministic", action="store_true")

    p_field = sub.add_parser("field", help="2D discriminator-gradient field")
    _add_kernel_args(p_field)
    p_field.add_argument("--loss", default="ipm", choices=["ipm", "lsgan", "vanilla"])
    p_field.add_argument("--x0", default="[0.5, 0.5]")
    p_field.add_argument("--y", default="[1.0, 0.0]")
    p_field.add_argument("--resolution", type=int, default=17)
    p_field.add_argument(
        "--extent", type=float, nargs=4, default=[-2.0, 2.0, -2.0, 2.0]
    )
    p_field.add_argument("--tau", type=float, default=1.0)
    p_field.add_argument("--out", default="out/field")

    p_kernel = sub.add_parser("kernel", help="Gram matrix + diagnostics")
    _add_kernel_args(p_kernel)
    p_kernel.add_argument("--points", required=True)
    p_kernel.add_argument("--out", default="out/kernel")

    p_eval = sub.add_parser("eval", help="Sinkhorn divergence of two clouds")
    p_eval.add_argument("cloud_a")
    p_eval.add_argument("cloud_b")
    p_eval.add_argument("--blur", type=float, default=0.001)
    p_eval.add_argument("--scaling", type=float, default=0.95)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.repeats, args.seed)
    if args.command == "field":
        return cmd_field(args)
    if args.command == "kernel":
        return cmd_kernel(args)
    return cmd_eval(args)


if __name__ == "__main__":
    sys.exit(main())
