"""Command-line entry point: ``msstnet {synth,train,eval,flops,dump}``.

Exit codes: 0 success, 2 usage or input error, 3 runtime failure.
Every run prints its effective configuration first (``# key = value``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, training
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, format_config, load_config
from .metrics import confusion, read_predictions, write_predictions, write_report
from .model import MSSTNet
from .numerics import ShapeError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _frames(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("frame counts must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file (keys mirror ModelConfig/TrainSchedule)")
    common.add_argument("--preset", choices=("desk", "tiny", "full"), help="base setting (default: desk)")
    common.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    common.add_argument("--workers", type=int, default=1, help="max worker threads (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="msstnet", description="Multi-scale spatio-temporal transformer toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic temporal-order dataset")
    s.add_argument("--clips", type=int, required=True, help="number of clips (>= 2*C)")
    s.add_argument("--out", type=Path, required=True, help="dataset directory (gets train/ and val/)")

    t = sub.add_parser("train", parents=[common], help="train on a synthetic dataset")
    t.add_argument("--data", type=Path, required=True, help="dataset directory from 'synth'")
    t.add_argument("--out", type=Path, required=True, help="output directory for checkpoint and log")
    t.add_argument("--epochs", type=int, help="override the epoch count (later decays are dropped)")

    e = sub.add_parser("eval", parents=[common], help="WAR/UAR report from a checkpoint or a predictions file")
    e.add_argument("--checkpoint", type=Path, help="model checkpoint")
    e.add_argument("--data", type=Path, help="split directory (with manifest.csv) or dataset root")
    e.add_argument("--split", default="val", help="split used when --data is a dataset root (default val)")
    e.add_argument("--predictions", type=Path, help="score an existing predictions CSV instead")
    e.add_argument("--shuffle-frames", action="store_true", help="permute frames of every clip before scoring")
    e.add_argument("--out", type=Path, required=True, help="output directory for predictions and report")

    f = sub.add_parser("flops", parents=[common], help="analytic FLOPs report")
    f.add_argument("--frames", type=_frames, help="comma-separated T values for a scaling table")
    f.add_argument("--out", type=Path, help="also write the report as CSV here")

    d = sub.add_parser("dump", parents=[common], help="dump token-norm grids and attention weights for one clip")
    d.add_argument("--capture", action="store_true", help="keep intermediates (required)")
    d.add_argument("--checkpoint", type=Path, help="model checkpoint (default: freshly initialised weights)")
    d.add_argument("--data", type=Path, help="split directory to take the clip from (default: one synthetic clip)")
    d.add_argument("--index", type=int, default=0, help="clip index within --data")
    d.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config, args.preset)
    if args.seed != cfg.model.seed:
        cfg = replace(cfg, model=replace(cfg.model, seed=args.seed))
    if getattr(args, "epochs", None) is not None:
        if args.epochs < 1:
            raise UsageError("--epochs must be positive")
        cfg = replace(cfg, schedule=cfg.schedule.truncated(args.epochs))
    return cfg


def _echo(cfg: RunConfig, out: Path | None = None) -> None:
    text = format_config(cfg)
    print("\n".join("# " + line for line in text.splitlines()), flush=True)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(text + "\n")


def _split_dir(path: Path, split: str) -> Path:
    return path if (path / "manifest.csv").exists() else path / split


def _load_model(cfg: RunConfig, ckpt: Path | None) -> MSSTNet:
    model = MSSTNet(cfg.model)
    if ckpt is not None:
        if not ckpt.exists():
            raise UsageError(f"checkpoint not found: {ckpt}")
        model.load(ckpt)
    return model


def cmd_synth(args) -> int:
    cfg = _load_run_config(args)
    _echo(cfg, args.out)
    ds = training.make_synthetic_dataset(args.clips, cfg.model, args.seed)
    training.save_dataset(ds, args.out)
    print(f"wrote {len(ds.train)} train and {len(ds.val)} val clips to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    _echo(cfg, args.out)
    train_set = training.load_split(args.data / "train")
    val_set = training.load_split(args.data / "val")
    if len(train_set) == 0:
        raise UsageError(f"no training clips in {args.data / 'train'}")
    ds = training.SyntheticDataset(train_set, val_set, training.class_orders(cfg.model.C, cfg.model.T))
    model = MSSTNet(cfg.model)
    res = training.train(
        model,
        ds,
        cfg.schedule,
        seed=args.seed,
        checkpoint_path=args.out / "checkpoint.bin",
        log_path=args.out / "train_log.csv",
        workers=args.workers,
    )
    last = res.log[-1]
    print(f"epochs={len(res.log)} final_loss={last.train_loss:.6f} best_epoch={res.best_epoch} best_val_war={res.best_val_war:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    _echo(cfg, args.out)
    if args.predictions is not None:
        if not args.predictions.exists():
            raise UsageError(f"predictions file not found: {args.predictions}")
        ids, labels, preds = read_predictions(args.predictions)
    else:
        if args.checkpoint is None or args.data is None:
            raise UsageError("eval needs --checkpoint and --data (or --predictions)")
        if not args.checkpoint.exists():
            raise UsageError(f"checkpoint not found: {args.checkpoint}")
        batch = training.load_split(_split_dir(args.data, args.split))
        if len(batch) == 0:
            raise UsageError(f"dataset {args.data} is empty")
        if args.shuffle_frames:
            batch = training.shuffle_frames(batch, args.seed)
        model = _load_model(cfg, args.checkpoint)
        ids, labels = batch.ids, batch.labels
        preds = training.predict(model, batch.clips)
    if len(labels) == 0:
        raise UsageError("no clips to evaluate")
    args.out.mkdir(parents=True, exist_ok=True)
    write_predictions(args.out / "predictions.csv", ids, labels, preds)
    summary = write_report(args.out / "report.csv", confusion(preds, labels, cfg.model.C))
    print(summary)
    return EXIT_OK


def cmd_flops(args) -> int:
    cfg = _load_run_config(args)
    _echo(cfg)
    if args.frames:
        rows = analysis.flops_scaling(cfg.model, args.frames)
        print(analysis.scaling_table(rows))
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            analysis.write_scaling_csv(args.out / "flops_scaling.csv", rows)
    else:
        rep = analysis.count_flops(cfg.model)
        print(rep.table())
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            rep.write_csv(args.out / "flops.csv")
    return EXIT_OK


def cmd_dump(args) -> int:
    if not args.capture:
        raise UsageError("dump needs --capture: maps exist only when the forward pass keeps intermediates")
    cfg = _load_run_config(args)
    _echo(cfg, args.out)
    model = _load_model(cfg, args.checkpoint)
    if args.data is not None:
        batch = training.load_split(_split_dir(args.data, "val"))
        if not 0 <= args.index < len(batch):
            raise UsageError(f"--index {args.index} outside 0..{len(batch) - 1}")
        clip = batch.clips[args.index]
    else:
        clip = training.make_synthetic_dataset(2 * cfg.model.C, cfg.model, args.seed).train.clips[0]
    files = analysis.dump_maps(model, clip, args.out, capture=True)
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "flops": cmd_flops, "dump": cmd_dump}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, FileNotFoundError, CheckpointError, ShapeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (training.TrainingDiverged, RuntimeError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
