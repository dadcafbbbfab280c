"""Command-line entry point.

Subcommands: train, eval, spectrum, ablation, mine-debug, gen-data.
Exit status: 0 on success, 1 on usage/config errors, 2 on runtime/numeric
errors.
"""

import argparse
import sys
from pathlib import Path

from .errors import ConfigError
from . import experiment


def _resolve_out(cfg, args) -> Path:
    out = args.out if args.out else cfg.output_dir
    if out is None:
        raise ConfigError("no output directory: set 'output_dir' in the config or pass --out")
    return Path(out)


def _load(args) -> "experiment.ExperimentConfig":
    cfg = experiment.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.training.seed = args.seed
    return cfg


def _cmd_train(args) -> int:
    cfg = _load(args)
    out = _resolve_out(cfg, args)
    state = experiment.run_train(cfg, out)
    if state.loss_history:
        step, tr, va = state.loss_history[-1]
        print(f"step {step}: train loss {tr:.6f}, validation loss {va:.6f}")
    print(f"artifacts written to {out}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load(args)
    out = _resolve_out(cfg, args)
    stats = experiment.run_eval(cfg, args.checkpoint, out)
    for k, (mean, std) in sorted(stats.items()):
        print(f"rank-{k} {mean:.4f} ± {std:.4f}")
    return 0


def _cmd_spectrum(args) -> int:
    out = Path(args.out) if args.out else Path(".")
    values = experiment.run_spectrum(args.checkpoint, out)
    print(f"{len(values)} eigenvalues, max {values[0]:.6f}, min {values[-1]:.6f}")
    return 0


def _cmd_ablation(args) -> int:
    cfg = _load(args)
    out = _resolve_out(cfg, args)
    rows = experiment.run_ablation(cfg, out)
    for arm, mean, std in rows:
        print(f"{arm}: rank-1 {mean:.4f} ± {std:.4f}")
    return 0


def _cmd_mine_debug(args) -> int:
    cfg = _load(args)
    out = _resolve_out(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    rows = experiment.run_mine_debug(cfg, args.checkpoint, out / "mine_trace.csv",
                                     args.batches)
    fallbacks = sum(1 for r in rows if r[3])
    print(f"{len(rows)} batches mined, {fallbacks} fallbacks -> {out / 'mine_trace.csv'}")
    return 0


def _cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = _resolve_out(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    dataset = experiment.run_gen_data(cfg, out / "dataset.csv")
    print(f"{len(dataset)} samples written to {out / 'dataset.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepmetric",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, config=True, checkpoint=False, checkpoint_required=False):
        p = sub.add_parser(name)
        if config:
            p.add_argument("--config", required=True, help="experiment YAML file")
            p.add_argument("--seed", type=int, default=None,
                           help="override the training seed")
        if checkpoint:
            p.add_argument("--checkpoint", required=checkpoint_required,
                           default=None, help="checkpoint JSON file")
        p.add_argument("--out", default=None, help="output directory")
        p.set_defaults(func=func)
        return p

    add("train", _cmd_train)
    add("eval", _cmd_eval, checkpoint=True, checkpoint_required=True)
    add("spectrum", _cmd_spectrum, config=False, checkpoint=True,
        checkpoint_required=True)
    add("ablation", _cmd_ablation)
    p = add("mine-debug", _cmd_mine_debug, checkpoint=True)
    p.add_argument("--batches", type=int, default=100)
    add("gen-data", _cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
