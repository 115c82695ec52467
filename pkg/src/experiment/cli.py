"""
cli.py
------
Command-line front end of the lab.

Subcommands
-----------
    train           train one config, write config.yaml / metrics.csv / model.npz
    eval-occlusion  patch-dropping accuracy of a trained run
    eval-shuffle    patch-shuffling accuracy of a trained run
    sweep           ablation grid over seeds, mean ± std per cell
    gen-data        write the configured collage dataset as IDX files

Exit status is 0 on success; a LabError exits with its category's code after
printing ``error: category=<category> message=<text>`` to stderr.

Usage
-----
    python run_lab.py train --config src/config/base.yaml --set lumix.r1=0.4 --set lumix.r2=0.1 --seed 1
    python run_lab.py sweep --spec src/config/sweeps/components.yaml
    python run_lab.py eval-occlusion --run-dir data/outputs/base
"""

from __future__ import annotations

import argparse
import os
import sys

from common.errors import ConfigError, LabError
from data.idx import save_dataset
from data.splits import load_splits
from experiment.config import INFO_LOSS_LEVELS, OCCLUSION_MODES, ExperimentConfig, load_config
from experiment.metrics import print_kpis
from experiment.robustness import (load_run, occlusion_report, save_report, shuffle_report,
                                   warn_if_not_monotone)
from experiment.sweep import load_sweep_spec, run_sweep
from experiment.train import run_training

DEFAULT_CONFIG = os.path.join("src", "config", "base.yaml")
DEFAULT_OUT = os.path.join("data", "outputs")


def _yaml_str(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def dataset_overrides(choice: str | None) -> list[str]:
    """``--dataset collage | blobs | idx:<path>`` as config overrides."""
    if not choice:
        return []
    if choice in ("collage", "blobs"):
        return [f"dataset.kind={choice}"]
    if choice.startswith("idx:") and len(choice) > 4:
        return ["dataset.kind=idx", f"dataset.path={_yaml_str(choice[4:])}"]
    raise ConfigError(f"--dataset must be collage, blobs or idx:<path>, got {choice!r}")


def resolve_config(args) -> ExperimentConfig:
    overrides = dataset_overrides(getattr(args, "dataset", None)) + list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    config_path = args.config
    if config_path is None and os.path.exists(DEFAULT_CONFIG):
        config_path = DEFAULT_CONFIG
    return load_config(config_path, overrides)


# ── Subcommands ───────────────────────────────────────────────────────────────

def cmd_train(args) -> int:
    cfg = resolve_config(args)
    cfg.output_dir = args.out or cfg.output_dir or os.path.join(DEFAULT_OUT, cfg.name)
    result = run_training(cfg, verbose=not args.quiet, dump_mixed_n=args.dump_mixed)
    print_kpis(result.kpis)
    return 0


def cmd_eval_occlusion(args) -> int:
    cfg, model, test = load_run(args.run_dir, args.overrides)
    rcfg = cfg.robustness
    if args.fraction:
        rcfg.info_loss = list(args.fraction)
    if args.mode:
        rcfg.modes = list(args.mode)
    if args.grid is not None:
        rcfg.patch_grid = args.grid
    report = occlusion_report(model, test, rcfg, cfg.seed, cfg.optim.eval_batch_size)
    warn_if_not_monotone(report)
    save_report(report, args.out or os.path.join(args.run_dir, "occlusion.csv"))
    return 0


def cmd_eval_shuffle(args) -> int:
    cfg, model, test = load_run(args.run_dir, args.overrides)
    grids = list(args.grid) if args.grid else cfg.robustness.shuffle_grids
    report = shuffle_report(model, test, grids, cfg.seed, cfg.optim.eval_batch_size)
    save_report(report, args.out or os.path.join(args.run_dir, "shuffle.csv"))
    return 0


def cmd_sweep(args) -> int:
    base = resolve_config(args)
    spec = load_sweep_spec(args.spec)
    run_sweep(base, spec, out_dir=args.out or os.path.join(DEFAULT_OUT, "sweeps"), verbose=not args.quiet)
    return 0


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    if cfg.dataset.kind != "collage":
        raise ConfigError(f"gen-data writes pixel images; dataset.kind must be collage, got {cfg.dataset.kind!r}")
    out = args.out or os.path.join("data", "generated", cfg.dataset.kind)
    for ds in load_splits(cfg.dataset, cfg.seed):
        images, labels = save_dataset(ds, os.path.join(out, f"{ds.split}-images-idx3-ubyte"))
        print(f"[gen-data] {ds.split}: {len(ds)} items → {images}, {labels}")
    print(f"[gen-data] Done. Load with --dataset idx:{os.path.join(out, 'train-images-idx3-ubyte')} "
          f"--set dataset.test_path={os.path.join(out, 'test-images-idx3-ubyte')}")
    return 0


# ── Parser ────────────────────────────────────────────────────────────────────

def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", default=None, help=f"YAML config (default {DEFAULT_CONFIG})")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dataset", default=None, help="collage | blobs | idx:<path>")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, e.g. lumix.r1=0.4 (repeatable)")
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run_lab", description="Label-uncertainty mixing lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    _common(p)
    p.add_argument("--dump-mixed", type=int, default=0, metavar="N", help="write N mixed images as PPM")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-occlusion", help="patch-dropping robustness of a trained run")
    _common(p, config=False)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--fraction", type=float, action="append", choices=INFO_LOSS_LEVELS)
    p.add_argument("--mode", action="append", choices=OCCLUSION_MODES)
    p.add_argument("--grid", type=int, default=None)
    p.set_defaults(func=cmd_eval_occlusion)

    p = sub.add_parser("eval-shuffle", help="patch-shuffling robustness of a trained run")
    _common(p, config=False)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--grid", type=int, action="append")
    p.set_defaults(func=cmd_eval_shuffle)

    p = sub.add_parser("sweep", help="run an ablation sweep spec")
    _common(p)
    p.add_argument("--spec", default=None, help="sweep YAML; omitted = base config only")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-data", help="write the collage dataset as IDX files")
    _common(p)
    p.set_defaults(func=cmd_gen_data)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except LabError as e:
        print(f"error: category={e.category} message={e}", file=sys.stderr)
        return e.exit_code


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
