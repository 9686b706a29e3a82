"""Command-line surface: simulate | sc-sweep | efficiency-check.

Each command reads an optional config file, applies CLI overrides, writes
plot-ready CSV artifacts into the output directory, and finishes by writing
``manifest.json`` as the completion marker.  Identical configs produce
byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    write_manifest,
)
from .estimators import AggregatorKind, monte_carlo_efficiency
from .sensitivity import sc_sweep, sensitivity_values
from .simulation import (
    LearningConfig,
    LinearModelConfig,
    draw_true_weights,
    run_experiment,
)
from .topology import TopologyError, generate_topology

_MARKER_KINDS = {
    AggregatorKind.TRIMMED_MEAN,
    AggregatorKind.TALWAR,
    AggregatorKind.TUKEY,
}


def _fmt(x: float) -> str:
    return repr(float(x))


def _edge_tag(p: float) -> str:
    return ("%g" % p).replace(".", "")


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        first, rest = row[0], row[1:]
        lines.append(",".join([str(int(first))] + [_fmt(v) for v in rest]))
    path.write_text("\n".join(lines) + "\n")


def _simulate_cell(
    cfg: ExperimentConfig, attack_name: str, num_malicious: int, out_dir: str
) -> list[str]:
    """Run all configured aggregators for one (attack, contamination) cell."""
    out = Path(out_dir)
    topology = generate_topology(
        cfg.agents, cfg.edge_probability, num_malicious, cfg.topology_seed
    )
    model = LinearModelConfig(
        true_weights=draw_true_weights(cfg.dim, cfg.weight_seed),
        noise_var=cfg.noise_var,
        samples_per_iteration=cfg.batch_size,
    )
    learning = LearningConfig(
        step_size=cfg.step_size,
        iterations=cfg.iterations,
        huber_delta=cfg.huber_delta,
    )
    attack = cfg.attack_spec(attack_name)
    traces = [
        run_experiment(topology, model, learning, agg, attack, cfg.data_seed)
        for agg in cfg.aggregator_specs()
    ]
    stem = f"edge_{_edge_tag(cfg.edge_probability)}_mal_{num_malicious}_out_{attack_name}"
    header = ["iteration"] + [t.metadata["aggregator"] for t in traces]
    written = []
    iteration = traces[0].iteration
    if cfg.metrics in ("both", "loss"):
        path = out / f"train_loss_{stem}.csv"
        _write_csv(path, header, [iteration] + [t.training_loss for t in traces])
        written.append(str(path))
    if cfg.metrics in ("both", "msd"):
        path = out / f"msd_{stem}.csv"
        _write_csv(path, header, [iteration] + [t.msd for t in traces])
        written.append(str(path))
    return written


def cmd_simulate(cfg: ExperimentConfig, threads: int = 1) -> list[Path]:
    """Run the (attack x contamination) grid; one CSV per cell and metric."""
    out = Path(cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(a, m) for a in cfg.attack_names for m in cfg.malicious_counts]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    _simulate_cell,
                    [cfg] * len(cells),
                    [a for a, _ in cells],
                    [m for _, m in cells],
                    [str(out)] * len(cells),
                )
            )
    else:
        results = [_simulate_cell(cfg, a, m, str(out)) for a, m in cells]
    outputs = [Path(p) for cell in results for p in cell]
    write_manifest(out / "manifest.json", "simulate", cfg, outputs)
    return outputs + [out / "manifest.json"]


def sweep_base_values(cfg: ExperimentConfig) -> np.ndarray:
    """Gaussian base set for the sweep; optionally mirrored around zero.

    The mirrored variant pins the robust aggregators' fixed point at the
    center, which reproduces the idealized curve shapes (exact redescent to
    zero) independent of sampling asymmetry.
    """
    rng = np.random.default_rng(cfg.sweep_base_seed)
    if not cfg.sweep_symmetric:
        return rng.standard_normal(cfg.sweep_base_size)
    half = rng.standard_normal(cfg.sweep_base_size // 2)
    parts = [half, -half]
    if cfg.sweep_base_size % 2:
        parts.append(np.zeros(1))
    return np.concatenate(parts)


def cmd_sc_sweep(cfg: ExperimentConfig) -> list[Path]:
    """Write the sensitivity-curve table and optional analytic peak markers."""
    from .attacks import mestimator_attack_values, trimmed_attack_values

    out = Path(cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    base = sweep_base_values(cfg)
    grid = np.linspace(cfg.sweep_grid_min, cfg.sweep_grid_max, cfg.sweep_grid_points)
    specs = cfg.aggregator_specs()
    table = sc_sweep(specs, base, grid, cfg.sweep_outlier_count)
    sc_path = out / "SC.csv"
    table.save(sc_path)
    outputs = [sc_path]
    if cfg.sweep_markers:
        lines = ["aggregator,outlier_value,sensitivity"]
        count = cfg.sweep_outlier_count
        for spec in specs:
            if spec.kind not in _MARKER_KINDS:
                continue
            if spec.kind is AggregatorKind.TRIMMED_MEAN:
                z = float(trimmed_attack_values(base, count, spec.alpha)[0])
            else:
                z = float(mestimator_attack_values(base, count, spec.kind, spec.c)[0])
            sc = float(sensitivity_values(spec, base, [z], count)[0])
            lines.append(f"{spec.label},{_fmt(z)},{_fmt(sc)}")
        marker_path = out / "SC_max.csv"
        marker_path.write_text("\n".join(lines) + "\n")
        outputs.append(marker_path)
    write_manifest(out / "manifest.json", "sc-sweep", cfg, outputs)
    return outputs + [out / "manifest.json"]


def cmd_efficiency_check(cfg: ExperimentConfig, stream=None) -> list[Path]:
    """Monte Carlo Gaussian-efficiency report for the configured estimators."""
    if stream is None:
        stream = sys.stdout
    out = Path(cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    rows = monte_carlo_efficiency(
        cfg.aggregator_specs(),
        trials=cfg.efficiency_trials,
        sample_size=cfg.efficiency_sample_size,
        seed=cfg.data_seed,
    )
    lines = ["estimator,variance_ratio,ci_low,ci_high"]
    for r in rows:
        lines.append(f"{r.label},{_fmt(r.variance_ratio)},{_fmt(r.ci_low)},{_fmt(r.ci_high)}")
        print(
            f"{r.label:14s} efficiency {r.variance_ratio:#.4g}"
            f"  (95% CI {r.ci_low:#.4g} .. {r.ci_high:#.4g})",
            file=stream,
        )
    path = out / "efficiency.csv"
    path.write_text("\n".join(lines) + "\n")
    write_manifest(out / "manifest.json", "efficiency-check", cfg, [path])
    return [path, out / "manifest.json"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scmsim",
        description="Robust-aggregation attack simulator for decentralized learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "run the learning experiment grid and write trace CSVs"),
        ("sc-sweep", "tabulate sensitivity curves over an outlier grid"),
        ("efficiency-check", "Monte Carlo Gaussian-efficiency calibration"),
    ):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", type=Path, help="config file (defaults apply if omitted)")
        cmd.add_argument("--out", type=Path, help="output directory override")
        cmd.add_argument("--seed", type=int, help="master seed override")
        cmd.add_argument("--threads", type=int, default=1, help="parallel grid cells")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config, master_seed=args.seed)
    else:
        cfg = parse_config("", master_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_directory=str(args.out))
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "simulate":
            cmd_simulate(cfg, threads=args.threads)
        elif args.command == "sc-sweep":
            cmd_sc_sweep(cfg)
        else:
            cmd_efficiency_check(cfg)
    except (ConfigError, TopologyError, ValueError, OSError) as err:
        print(f"scmsim: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
