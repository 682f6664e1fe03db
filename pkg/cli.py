#!/usr/bin/env python3
"""
Command-line front-end for the Mean Teacher training desk
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

from src.config.experiment import parse_config, parse_overrides
from src.config.logging import configure_logging
from src.config.settings import settings
from src.data.datasets import make_glyphs
from src.data.idx import write_idx
from src.errors import ConfigError, EngineError, exit_code_for
from src.harness import evaluate_run, run_experiment, run_grid


def parse_axes(specs: List[str]) -> Dict[str, List[str]]:
    """``key=v1,v2,...`` axis flags into a mapping; values stay strings for the config parser"""
    axes: Dict[str, List[str]] = {}
    violations = []
    for spec in specs:
        if "=" not in spec:
            violations.append(f"expected --axis key=v1,v2,..., got {spec!r}")
            continue
        key, values = spec.split("=", 1)
        key = key.strip().replace("-", "_")
        if key in axes:
            violations.append(f"{key}: axis given twice")
        axes[key] = [value.strip() for value in values.split(",") if value.strip()]
    if violations:
        raise ConfigError(violations)
    return axes


def parse_seeds(text: str) -> List[int]:
    """``0,1,2`` or a range ``0-9``"""
    try:
        if "-" in text and "," not in text:
            first, last = text.split("-", 1)
            return list(range(int(first), int(last) + 1))
        return [int(seed) for seed in text.split(",") if seed.strip()]
    except ValueError:
        raise ConfigError([f"seeds: expected 0,1,2 or 0-9, got {text!r}"])


def command_train(args, extra: List[str]) -> Dict:
    cfg = parse_config(args.config, parse_overrides(extra))
    if args.resume and not args.run_dir:
        raise ConfigError(["--resume needs --run-dir"])
    result = run_experiment(cfg, run_dir=args.run_dir, resume=args.resume)
    return {"run_dir": str(result.run_dir), **result.summary}


def command_sweep(args, extra: List[str]) -> Dict:
    cfg = parse_config(args.config, parse_overrides(extra))
    axes = parse_axes(args.axis)
    df = run_grid(cfg, axes, parse_seeds(args.seeds), out_dir=args.out, workers=args.workers)
    return {"runs": len(df), "statuses": df["status"].value_counts().to_dict()}


def command_eval(args, extra: List[str]) -> Dict:
    if extra:
        raise ConfigError([f"eval takes no config overrides, got {' '.join(extra)}"])
    return evaluate_run(args.run_dir, checkpoint=args.checkpoint, target=args.target)


def command_export_data(args, extra: List[str]) -> Dict:
    if extra:
        raise ConfigError([f"export-data takes no config overrides, got {' '.join(extra)}"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for part, n, offset in (("train", args.n, 0), ("test", args.test_n, 1)):
        ds = make_glyphs(n, args.seed + offset, side=args.side)
        images = out / f"{part}-images.idx"
        labels = out / f"{part}-labels.idx"
        write_idx(ds, images, labels)
        written[part] = {"images": str(images), "labels": str(labels), "examples": n}
    return written


def command_status(args, extra: List[str]) -> Dict:
    return settings.describe()


COMMANDS = {
    "train": command_train,
    "sweep": command_sweep,
    "eval": command_eval,
    "export-data": command_export_data,
    "status": command_status,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Mean Teacher training desk: train, sweep, evaluate and export data",
        epilog="Any config key can be overridden with --key=value on train and sweep.",
        allow_abbrev=False,
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    train_parser = subparsers.add_parser("train", help="Run one experiment", allow_abbrev=False)
    train_parser.add_argument("--config", help="key=value config file")
    train_parser.add_argument("--run-dir", help="Run directory (default: under MT_RUN_ROOT)")
    train_parser.add_argument("--resume", action="store_true", help="Continue from the run's latest checkpoint")

    sweep_parser = subparsers.add_parser("sweep", help="Grid sweep over config keys", allow_abbrev=False)
    sweep_parser.add_argument("--config", help="Base key=value config file")
    sweep_parser.add_argument("--axis", action="append", default=[], help="key=v1,v2,... (repeat for a grid)")
    sweep_parser.add_argument("--seeds", default="0", help="Seeds: 0,1,2 or 0-9")
    sweep_parser.add_argument("--workers", type=int, default=None, help="Parallel runs (default: SWEEP_WORKERS)")
    sweep_parser.add_argument("--out", help="Sweep directory")

    eval_parser = subparsers.add_parser("eval", help="Evaluate a run's checkpoint on its test set", allow_abbrev=False)
    eval_parser.add_argument("--run-dir", required=True, help="Run directory")
    eval_parser.add_argument("--checkpoint", help="Checkpoint file (default: checkpoints/latest.npz)")
    eval_parser.add_argument("--target", choices=["teacher", "student"], help="Weights to evaluate")

    export_parser = subparsers.add_parser("export-data", help="Write the synthetic glyph set as IDX files", allow_abbrev=False)
    export_parser.add_argument("--n", type=int, default=1000, help="Training examples")
    export_parser.add_argument("--test-n", type=int, default=1000, help="Test examples")
    export_parser.add_argument("--seed", type=int, default=0, help="Seed of the training part")
    export_parser.add_argument("--side", type=int, default=8, help="Image side in pixels")
    export_parser.add_argument("--out", default="data/glyphs", help="Output directory")

    subparsers.add_parser("status", help="Show settings", allow_abbrev=False)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function; returns the process exit code"""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if not args.command:
        parser.print_help()
        return 0

    configure_logging()
    try:
        result = COMMANDS[args.command](args, extra)
    except EngineError as error:
        print(json.dumps({"error": error.category, "message": str(error)}), file=sys.stderr)
        return exit_code_for(error)
    except Exception as error:
        print(json.dumps({"error": "internal", "message": f"{type(error).__name__}: {error}"}), file=sys.stderr)
        return exit_code_for(error)
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
