"""Command-line entry point: run single experiments, sweep algorithms, validate configs.

Numeric CSV fields are written with 17 significant digits so every 64-bit
value round-trips exactly; reruns with the same config are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .config import (
    ALGORITHMS,
    ExperimentConfig,
    config_hash,
    dumps_config,
    parse_config,
)
from .errors import ConfigError
from .metrics import RoundReport
from .simulation import run_simulation

SEED_ENV_VAR = "COREFED_SEED"
ROUNDS_HEADER = "round,mean_accuracy,d_cosine_mean,d_manhattan_mean,learning_rate,num_online,mean_contrastive_loss"
SUMMARY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunManifest:
    config_path: str
    output_dir: str
    run_id: str
    config_sha1: str
    overwrite: bool = False


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def load_config(path) -> ExperimentConfig:
    """Parse a config file and apply the seed override from the environment."""
    cfg = parse_config(path)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    return cfg


def make_manifest(config_path, out_dir, cfg: ExperimentConfig, run_id: str | None,
                  overwrite: bool, prefix: str = "run") -> RunManifest:
    digest = config_hash(cfg)
    return RunManifest(
        config_path=str(config_path),
        output_dir=str(out_dir),
        run_id=run_id or f"{prefix}-{digest[:12]}",
        config_sha1=digest,
        overwrite=overwrite,
    )


def _prepare_run_dir(manifest: RunManifest) -> Path:
    run_dir = Path(manifest.output_dir) / manifest.run_id
    if run_dir.exists():
        if not manifest.overwrite:
            raise FileExistsError(f"run directory {run_dir} exists; pass --overwrite to replace it")
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    return run_dir


def _round_row(report: RoundReport) -> str:
    return ",".join([
        str(report.round),
        _fmt(report.mean_accuracy),
        _fmt(report.d_cosine_mean),
        _fmt(report.d_manhattan_mean),
        _fmt(report.learning_rate),
        str(report.num_online),
        _fmt(report.mean_contrastive_loss),
    ])


def write_outputs(run_dir: Path, cfg: ExperimentConfig, manifest: RunManifest,
                  reports: list[RoundReport]) -> None:
    (run_dir / "config.json").write_text(dumps_config(cfg), encoding="utf-8")

    lines = [ROUNDS_HEADER] + [_round_row(r) for r in reports]
    (run_dir / "rounds.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    acc_lines = ["round,client_id,accuracy"]
    for report in reports:
        for cid in sorted(report.per_client_accuracy):
            acc_lines.append(f"{report.round},{cid},{_fmt(report.per_client_accuracy[cid])}")
    (run_dir / "per_client_accuracy.csv").write_text("\n".join(acc_lines) + "\n", encoding="utf-8")

    final = None
    if reports:
        last = reports[-1]
        mean_contrast = last.mean_contrastive_loss
        final = {
            "round": last.round,
            "mean_accuracy": last.mean_accuracy,
            "d_cosine_mean": last.d_cosine_mean,
            "d_manhattan_mean": last.d_manhattan_mean,
            "learning_rate": last.learning_rate,
            "num_online": last.num_online,
            "mean_contrastive_loss": None if math.isnan(mean_contrast) else mean_contrast,
        }
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "run_id": manifest.run_id,
        "algorithm": cfg.algorithm,
        "config_sha1": manifest.config_sha1,
        "rounds": len(reports),
        "final": final,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")


def cmd_run(manifest: RunManifest, cfg: ExperimentConfig) -> int:
    try:
        run_dir = _prepare_run_dir(manifest)
        result = run_simulation(cfg, checkpoint_dir=run_dir if cfg.checkpoint_interval else None)
        write_outputs(run_dir, cfg, manifest, result.reports)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"run {manifest.run_id}: {len(result.reports)} rounds -> {run_dir}")
    return 0


def cmd_sweep(manifest: RunManifest, cfg: ExperimentConfig, algorithms: list[str]) -> int:
    if not algorithms:
        print("error: sweep needs at least one algorithm", file=sys.stderr)
        return 1
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        print(f"error: unknown algorithm(s): {', '.join(unknown)}", file=sys.stderr)
        return 1
    try:
        sweep_dir = _prepare_run_dir(manifest)
        comparison = ["algorithm,accuracy,d_cosine,d_manhattan"]
        for algorithm in algorithms:
            algo_cfg = replace(cfg, algorithm=algorithm)
            algo_dir = sweep_dir / algorithm
            algo_dir.mkdir()
            result = run_simulation(
                algo_cfg, checkpoint_dir=algo_dir if algo_cfg.checkpoint_interval else None)
            algo_manifest = replace(manifest, run_id=f"{manifest.run_id}/{algorithm}",
                                    config_sha1=config_hash(algo_cfg))
            write_outputs(algo_dir, algo_cfg, algo_manifest, result.reports)
            last = result.reports[-1] if result.reports else None
            comparison.append(",".join([
                algorithm,
                _fmt(last.mean_accuracy) if last else "nan",
                _fmt(last.d_cosine_mean) if last else "nan",
                _fmt(last.d_manhattan_mean) if last else "nan",
            ]))
        (sweep_dir / "comparison.csv").write_text("\n".join(comparison) + "\n", encoding="utf-8")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"sweep {manifest.run_id}: {', '.join(algorithms)} -> {sweep_dir}")
    return 0


def cmd_validate(config_path) -> int:
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(dumps_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corefed",
        description="Deterministic simulator for fairness-aware federated learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment and write result files")
    run_p.add_argument("--config", required=True, help="path to a JSON experiment config")
    run_p.add_argument("--out", required=True, help="output directory (run files go in <out>/<run-id>)")
    run_p.add_argument("--run-id", default=None, help="run directory name (default: config hash)")
    run_p.add_argument("--overwrite", action="store_true", help="replace an existing run directory")

    sweep_p = sub.add_parser("sweep", help="run several algorithms on the identical seed/partition")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--algorithms", required=True,
                         help=f"comma-separated subset of {{{','.join(ALGORITHMS)}}}")
    sweep_p.add_argument("--run-id", default=None)
    sweep_p.add_argument("--overwrite", action="store_true")

    val_p = sub.add_parser("validate", help="parse a config and echo the resolved values")
    val_p.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.config)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "run":
        manifest = make_manifest(args.config, args.out, cfg, args.run_id, args.overwrite)
        return cmd_run(manifest, cfg)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    manifest = make_manifest(args.config, args.out, cfg, args.run_id, args.overwrite, prefix="sweep")
    return cmd_sweep(manifest, cfg, algorithms)


if __name__ == "__main__":
    sys.exit(main())
