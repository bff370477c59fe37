"""Command-line entry points: gen, train, eval, plot.

Every command takes a declarative config file; flags override individual
values so ablation runs stay auditable. Failures exit nonzero with one
machine-parseable line on stderr: `ERROR <CODE> <message>`.

Exit codes: 0 success, 2 bad config, 3 missing/conflicting data,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import build_index
from .errors import ConfigError, DataError, NumericError
from .generate import generate_dataset
from .model import load_checkpoint
from .report import EvalConfig, load_report, plot_deformation_curves, run_evaluation
from .storage import read_manifest
from .train import train_loop


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vistact",
                                     description="paired vision/touch simulation, "
                                                 "cross-modal training, evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment YAML")
        p.add_argument("--seed", type=int, default=None, help="override global seed")
        p.add_argument("--out", default=None, help="override the command's output dir")

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    common(gen)
    gen.add_argument("--force", action="store_true",
                     help="replace an existing non-empty output directory")

    train = sub.add_parser("train", help="train the cross-modal model")
    common(train)
    train.add_argument("--data", default=None, help="dataset root (defaults to config)")
    train.add_argument("--direction", choices=("v2t", "t2v"), default=None)
    train.add_argument("--steps", type=int, default=None)
    train.add_argument("--resume", default=None, help="checkpoint to continue from")
    train.add_argument("--no-reference", action="store_true",
                       help="ablation: zero the reference branch")
    train.add_argument("--no-rebalance", action="store_true",
                       help="ablation: uniform sampling instead of rarity weights")
    train.add_argument("--no-temporal", action="store_true",
                       help="ablation: repeat the current frame across the window")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on the test splits")
    common(ev)
    ev.add_argument("--data", default=None)
    ev.add_argument("--checkpoint", default=None)
    ev.add_argument("--use-ground-truth", action="store_true",
                    help="score ground-truth frames as predictions (pipeline check)")

    plot = sub.add_parser("plot", help="render deformation curves from a report")
    plot.add_argument("--report", required=True, help="report.json or its directory")
    plot.add_argument("--out", required=True, help="output directory for PNGs")
    return parser


def _resolve_seed(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is None:
        return config
    train = dataclasses.replace(config.train, seed=args.seed)
    return dataclasses.replace(config, seed=args.seed, train=train)


def cmd_gen(args) -> int:
    config = _resolve_seed(load_config(args.config), args)
    out = Path(args.out) if args.out else Path(config.dataset.out)
    manifest = generate_dataset(config.dataset, config.seed, out, force=args.force)
    counts = {split: len(ids) for split, ids in manifest["splits"].items()}
    print(f"dataset written to {out} ({counts})")
    return 0


def cmd_train(args) -> int:
    config = _resolve_seed(load_config(args.config), args)
    train_cfg = config.train
    if args.direction:
        train_cfg = dataclasses.replace(train_cfg, direction=args.direction)
    if args.steps is not None:
        train_cfg = dataclasses.replace(train_cfg, steps=args.steps)
    if args.no_reference:
        train_cfg = dataclasses.replace(train_cfg, use_reference=False)
    if args.no_rebalance:
        train_cfg = dataclasses.replace(train_cfg, rebalance=False)
    if args.no_temporal:
        train_cfg = dataclasses.replace(train_cfg, temporal=False)

    data_root = Path(args.data) if args.data else Path(config.dataset.out)
    manifest = read_manifest(data_root)
    crop = train_cfg.augment.crop_size
    effective = crop if crop is not None else manifest["canvas"]
    if config.model.image_size != effective:
        raise ConfigError(f"model.image_size {config.model.image_size} does not match "
                          f"training resolution {effective}")

    index = build_index(data_root, "train", direction=train_cfg.direction)
    out = Path(args.out) if args.out else Path(config.train_out)
    resume = Path(args.resume) if args.resume else None
    final = train_loop(index, config.model, train_cfg, out, resume=resume)
    print(f"training complete, final checkpoint {final}")
    return 0


def cmd_eval(args) -> int:
    config = _resolve_seed(load_config(args.config), args)
    eval_cfg = config.eval
    if args.use_ground_truth:
        eval_cfg = dataclasses.replace(eval_cfg, use_ground_truth=True)
    ckpt_str = args.checkpoint or eval_cfg.checkpoint
    if not ckpt_str:
        raise ConfigError("no checkpoint given (config eval.checkpoint or --checkpoint)")
    ckpt = Path(ckpt_str)
    load_checkpoint(ckpt)  # fail fast with exit code 3 when missing
    data_root = Path(args.data) if args.data else Path(config.dataset.out)
    out = Path(args.out) if args.out else Path(eval_cfg.out)
    report = run_evaluation(ckpt, data_root, eval_cfg, out_dir=out)
    for split, block in report["splits"].items():
        print(f"{split}: {block['aggregate']}")
    print(f"report written to {out}")
    return 0


def cmd_plot(args) -> int:
    report = load_report(Path(args.report))
    written = plot_deformation_curves(report, Path(args.out))
    print(f"{len(written)} plot(s) written to {args.out}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "plot": cmd_plot}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ERROR CONFIG {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"ERROR DATA {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"ERROR NUMERIC {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
