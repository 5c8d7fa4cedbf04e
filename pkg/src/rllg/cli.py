"""Command line entry point: ``rllg run``, ``rllg bench``, ``rllg auc``, ``rllg guide``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .environments import make_env
from .guides import load_learned_guide, point_mass_confidence

# CLI flag -> RunConfig field for the knobs exposed directly on ``rllg run``.
RUN_FLAGS = {
    "env": str, "agent": str, "epochs": int, "steps_per_epoch": int,
    "updates_per_epoch": int, "eval_trials": int, "phi": float, "beta0": float,
    "delta": float, "schedule": str, "period": int, "lambda_threshold": float,
    "bc_metric": str, "lr": float, "batch_size": int, "guide": str,
    "guide_checkpoint": str, "label": str,
}


def _progress(cfg, record):
    print(f"[{cfg.label} seed {cfg.seed}] epoch {record.epoch}: CR {record.mean_return:.4g} "
          f"violations {record.violations}", file=sys.stderr, flush=True)


def _config_from_args(args) -> harness.RunConfig:
    pairs = harness.parse_pairs(Path(args.config).read_text()) if args.config else {}
    pairs = {k.replace("-", "_"): v for k, v in pairs.items()}
    for name in RUN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            pairs[name] = str(value)
    if args.hidden is not None:
        pairs["hidden"] = args.hidden
    if args.timing:
        pairs["timing"] = "true"
    for item in args.set or []:
        key, _, value = item.partition("=")
        pairs[key.strip().replace("-", "_")] = value.strip()
    pairs.pop("seeds", None)
    return harness.RunConfig.from_pairs(pairs)


def cmd_run(args) -> int:
    config = _config_from_args(args).resolve()
    seeds = args.seed if args.seed is not None else [config.seed]
    log = None if args.quiet else _progress
    runs = harness.run_seeds(config, seeds, args.cache, log)
    tables = harness.aggregate({config.label: runs}, configs={config.label: config})
    out = harness.write_outputs(tables, args.out)
    _print_summary(tables)
    print(f"wrote {out}")
    return 0


def cmd_bench(args) -> int:
    suite = harness.Suite.from_text(Path(args.suite).read_text())
    log = None if args.quiet else _progress
    tables = harness.run_suite(suite, args.out, args.cache, log)
    _print_summary(tables)
    print(f"wrote {args.out}")
    return 0


def cmd_auc(args) -> int:
    runs = harness.read_epochs_csv(args.input)
    tables = harness.aggregate({"run": runs}, cr_star=args.cr_star)
    t = tables["run"]
    print(f"CR* = {t.cr_star!r}")
    for seed, auc in sorted(t.auc.items()):
        print(f"seed {seed}: auc {auc!r}")
    print(f"mean {t.auc_mean!r} half-std {t.auc_half_std!r}")
    return 0


def cmd_guide(args) -> int:
    path = harness.train_guide(args.out, epochs=args.epochs, fraction=args.fraction,
                               seed=args.seed)
    guide = load_learned_guide(path, point_mass_confidence(args.radius))
    env = make_env("point-mass")
    seeds = np.arange(args.trials) + 10_000
    rate = harness.guide_reach_rate(guide, env, seeds, args.radius)
    print(f"wrote {path}; reaches the radius-{args.radius} ball in {rate:.0%} of episodes")
    return 0


def _print_summary(tables):
    for label, t in tables.items():
        print(f"{label}: AUC {t.auc_mean:.4f} +/- {t.auc_half_std:.4f} over {len(t.auc)} seeds, "
              f"training violations {t.violations()}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rllg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one agent over one or more seeds")
    run.add_argument("--config", help="flat key = value file; flags override it")
    for name, kind in RUN_FLAGS.items():
        run.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    run.add_argument("--seed", type=int, nargs="+")
    run.add_argument("--hidden", help="comma separated hidden widths, e.g. 64,64")
    run.add_argument("--timing", action="store_true",
                     help="record wall-clock seconds (outputs stop being byte-reproducible)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="any other config key, e.g. --set env.max_episode_steps=200")
    run.add_argument("--out", required=True)
    run.add_argument("--cache", help="directory of reusable finished runs")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="run a declared grid and write one summary")
    bench.add_argument("--suite", required=True)
    bench.add_argument("--out", required=True)
    bench.add_argument("--cache")
    bench.add_argument("--quiet", action="store_true")
    bench.set_defaults(func=cmd_bench)

    auc = sub.add_parser("auc", help="recompute normalized AUC from an epochs.csv")
    auc.add_argument("--in", dest="input", required=True)
    auc.add_argument("--cr-star", type=float, help="normalizer; defaults to the best CR in the file")
    auc.set_defaults(func=cmd_auc)

    guide = sub.add_parser("guide", help="train and snapshot the point-mass guide")
    guide.add_argument("--out", required=True)
    guide.add_argument("--epochs", type=int, default=20)
    guide.add_argument("--fraction", type=float, default=0.3)
    guide.add_argument("--seed", type=int, default=0)
    guide.add_argument("--radius", type=float, default=0.1)
    guide.add_argument("--trials", type=int, default=100)
    guide.set_defaults(func=cmd_guide)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"rllg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
