"""Command-line entry point: ``rquad {train,sweep,compare,inspect-checkpoint,show-config}``.

Exit codes: 0 success, 2 configuration or usage error, 3 file format
error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import agent, checkpoint, config, evaluate
from .nn import DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_DIVERGED = 4

CHECKPOINT_NAME = "checkpoint.rqckpt"
LOG_NAME = "train_log.csv"
CONFIG_NAME = "config.txt"
HEATMAP_NAME = "heatmap.csv"
EPISODES_NAME = "episodes.csv"

log = logging.getLogger("rquad")


class UsageError(Exception):
    pass


def _resolve(args, extra) -> config.RunConfig:
    overrides = config.parse_overrides(extra)
    if getattr(args, "algorithm", None):
        overrides["run.algorithm"] = args.algorithm
    if getattr(args, "out", None):
        overrides["run.output_dir"] = args.out
    return config.load(args.config, overrides)


def _outdir(cfg: config.RunConfig) -> Path:
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args, extra) -> int:
    cfg = _resolve(args, extra)
    algorithm = cfg.run.algorithm
    out = _outdir(cfg)
    cfg.save(out / CONFIG_NAME)
    log_path = out / LOG_NAME
    log.info("training %s for %d steps, seed %d -> %s", algorithm, cfg.hp.total_iterations, cfg.seed, out)
    # rows are streamed so a diverged run still leaves its log behind
    with open(log_path, "w") as fh:
        fh.write(agent.LogRow.HEADER + "\n")

        def write_row(row):
            fh.write(row.to_csv() + "\n")

        try:
            result = agent.train(cfg.hyperparams, cfg.env, algorithm, callback=write_row)
        except DivergenceError as exc:
            print(f"error: training diverged: {exc} (see {log_path})", file=sys.stderr)
            return EXIT_DIVERGED
    checkpoint.save(out / CHECKPOINT_NAME, result.networks)
    print(f"checkpoint: {out / CHECKPOINT_NAME}")
    print(f"log: {log_path}")
    print(f"babbling mean return: {result.babble_mean_return:.3f}")
    print(f"final evaluation mean return: {result.final_eval_mean_return():.3f}")
    return EXIT_OK


def cmd_sweep(args, extra) -> int:
    cfg = _resolve(args, extra)
    networks = checkpoint.load(args.checkpoint)
    if "actor" not in networks:
        raise checkpoint.CheckpointError(f"{args.checkpoint} holds no actor network")
    out = _outdir(cfg)
    cfg.save(out / CONFIG_NAME)
    heatmap = evaluate.sweep(networks["actor"], cfg.grid, cfg.env, cfg.seed, n_jobs=cfg.run.eval_workers)
    heatmap.save(out / HEATMAP_NAME, out / EPISODES_NAME)
    print(f"heatmap: {out / HEATMAP_NAME}")
    print(f"episodes: {out / EPISODES_NAME}")
    return EXIT_OK


def cmd_compare(args, extra) -> int:
    if extra:
        raise UsageError(f"compare takes no overrides, got {' '.join(extra)}")
    robust = evaluate.Heatmap.load(args.robust)
    baseline = evaluate.Heatmap.load(args.baseline)
    try:
        result = evaluate.compare(robust, baseline)
    except evaluate.GridMismatchError as exc:
        raise UsageError(f"{args.robust} and {args.baseline}: {exc}") from None
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(result.to_csv())
        print(f"difference: {args.out}")
    print(f"win fraction: {result.win_fraction}")
    return EXIT_OK


def cmd_inspect(args, extra) -> int:
    networks = checkpoint.load(args.checkpoint)
    print(f"format: {checkpoint.MAGIC.decode()} v{checkpoint.VERSION}, {len(networks)} networks")
    for role, net in networks.items():
        dims = "-".join(str(d) for d in net.layer_dims)
        print(f"{role:18s} {dims:16s} {net.size:7d} parameters, output {net.output_activation}")
    return EXIT_OK


def cmd_show_config(args, extra) -> int:
    sys.stdout.write(_resolve(args, extra).to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rquad",
        description="Train and stress-test action-robust quadcopter controllers.",
        epilog="Any config key can be overridden with --section.key VALUE; RQ_SEED overrides run.seed.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy and write checkpoint, log and resolved config")
    p.add_argument("--config", help="configuration file")
    p.add_argument("--algorithm", choices=agent.ALGORITHMS, help="overrides run.algorithm (default ar-ddpg)")
    p.add_argument("--out", help="output directory (overrides run.output_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="evaluate a checkpoint over the perturbation grid")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="configuration file")
    p.add_argument("--out", help="output directory (overrides run.output_dir)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="difference of two heatmaps and the robust win fraction")
    p.add_argument("robust", help="heatmap CSV of the robust policy")
    p.add_argument("baseline", help="heatmap CSV of the baseline policy")
    p.add_argument("--out", help="where to write the difference CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect-checkpoint", help="list the networks stored in a checkpoint")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    p.add_argument("--config", help="configuration file")
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, extra)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except checkpoint.CheckpointError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as exc:
        # malformed heatmap CSVs
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
