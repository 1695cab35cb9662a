"""Command-line entry point: ``ddf-curriculum {train,suite,inspect-goals}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import METHOD_ALIASES, METHODS, ConfigError, load_config
from .harness import inspect_goals, run_suite, run_training, steps_to_threshold

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _method(value: str) -> str:
    value = METHOD_ALIASES.get(value, value)
    if value not in METHODS:
        raise argparse.ArgumentTypeError("choose from curriculum, uniform")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddf-curriculum",
        description="Train goal-conditioned agents with a distance-classifier goal curriculum.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one method with one seed")
    train.add_argument("--config", required=True, help="INI experiment config")
    train.add_argument("--seed", type=int, help="defaults to the first seed in the config")
    train.add_argument("--method", type=_method, help="curriculum or uniform (default: from config)")
    train.add_argument("--out", help="output directory (default: experiment.out_dir)")

    suite = sub.add_parser("suite", help="every configured method and seed, plus aggregates")
    suite.add_argument("--config", required=True)
    suite.add_argument("--out", required=True)

    insp = sub.add_parser("inspect-goals", help="sample curriculum goals from a saved checkpoint")
    insp.add_argument("--checkpoint", required=True, help="a checkpoint_<method>_<seed> directory")
    insp.add_argument("--n", type=int, required=True, help="number of goals")
    insp.add_argument("--seed", type=int, default=0)
    insp.add_argument("--out", help="where to write goals_<step>.csv (default: the checkpoint)")
    return parser


def _fmt_steps(steps: float) -> str:
    return "never" if math.isinf(steps) else str(int(steps))


def _train(args) -> None:
    config = load_config(args.config)
    exp = config.experiment
    seed = exp.seeds[0] if args.seed is None else args.seed
    method = args.method or exp.method
    out = Path(args.out or exp.out_dir)
    metrics = run_training(config, seed, out, method)
    s = metrics.success
    print(f"{method} seed {seed}: {len(s)} eval points, final success {s[-1]:.3f}")
    for t in exp.thresholds:
        print(f"  steps to sustained {t:g}: {_fmt_steps(steps_to_threshold(metrics.env_steps, s, t, exp.sustain_window))}")
    print(f"outputs in {out}")


def _suite(args) -> None:
    config = load_config(args.config)
    result = run_suite(config, args.out)
    for method in result.runs:
        meds = ", ".join(f"{t:g}: {_fmt_steps(result.median_steps_to(method, t))}"
                         for t in config.experiment.thresholds)
        print(f"{method}: median steps to threshold {{{meds}}}")
    print(f"outputs in {args.out}")


def _inspect(args) -> None:
    if args.n < 0:
        raise ConfigError("--n must be non-negative")
    ckpt = Path(args.checkpoint)
    if not (ckpt / "run.json").is_file():
        raise ConfigError(f"{ckpt} is not a checkpoint directory")
    snap = inspect_goals(ckpt, args.n, args.seed, args.out)
    d = np.asarray(snap.distances)
    print(f"checkpoint at step {snap.env_steps}: {len(d)} goals")
    if len(d):
        print(f"  oracle distance mean {d.mean():.2f} min {d.min():g} max {d.max():g}")
    sources = {}
    for g in snap.goals:
        sources[g.source.value] = sources.get(g.source.value, 0) + 1
    print("  sources " + ", ".join(f"{k}={v}" for k, v in sorted(sources.items())))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    handler = {"train": _train, "suite": _suite, "inspect-goals": _inspect}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
