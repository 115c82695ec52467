"""
sweep.py
--------
Runs a grid of config overrides over a list of seeds and aggregates the
final-epoch metrics as mean ± std per cell.

Sweep spec (YAML, see src/config/sweeps/)
-----------------------------------------
    name: components
    seeds: [0, 1, 2, 3, 4]        # optional, default 5 seeds
    cells:
      - name: baseline
        overrides: {lumix.r1: 0.0, lumix.r2: 0.0, lumix.enable_reg: false}
      - name: +lambda_s
        overrides: {...}

A spec without cells runs the base config alone.  Cells are independent
runs and may go to worker processes; ``LUMIX_THREADS`` caps how many
(default 1, i.e. in-process).

Usage
-----
    PYTHONPATH=src python -m experiment.sweep --spec src/config/sweeps/components.yaml
"""

from __future__ import annotations

import argparse
import copy
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import pandas as pd
import yaml

from common.errors import ConfigError
from experiment.config import ExperimentConfig, config_from_dict, load_config
from experiment.metrics import write_csv
from experiment.train import run_training

DEFAULT_SEEDS = [0, 1, 2, 3, 4]
SWEEP_SCHEMA = "lumix-sweep v1"


@dataclass
class SweepCell:
    name: str
    overrides: dict = field(default_factory=dict)


@dataclass
class SweepSpec:
    name: str = "base"
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    cells: list[SweepCell] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict | None) -> "SweepSpec":
        data = data or {}
        unknown = sorted(set(data) - {"name", "seeds", "cells"})
        if unknown:
            raise ConfigError(f"unknown sweep key(s): {', '.join(unknown)}")
        seeds = data.get("seeds", DEFAULT_SEEDS)
        if not isinstance(seeds, list) or not seeds or any(not isinstance(s, int) or s < 0 for s in seeds):
            raise ConfigError(f"sweep seeds must be a non-empty list of nonnegative ints, got {seeds!r}")
        cells = []
        for i, raw in enumerate(data.get("cells") or []):
            if not isinstance(raw, dict) or "name" not in raw:
                raise ConfigError(f"sweep cell #{i} needs a name")
            overrides = raw.get("overrides") or {}
            if not isinstance(overrides, dict):
                raise ConfigError(f"sweep cell {raw['name']!r}: overrides must be a mapping")
            cells.append(SweepCell(str(raw["name"]), overrides))
        names = [c.name for c in cells]
        if len(set(names)) != len(names):
            raise ConfigError("sweep cell names must be unique")
        return cls(name=str(data.get("name", "base")), seeds=list(seeds), cells=cells)


def load_sweep_spec(path: str | None) -> SweepSpec:
    if not path:
        return SweepSpec()
    if not os.path.exists(path):
        raise ConfigError(f"sweep spec not found: {path}")
    with open(path) as f:
        try:
            return SweepSpec.from_dict(yaml.safe_load(f))
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})") from None


def cell_config(base: ExperimentConfig, cell: SweepCell, seed: int, out_root: str | None) -> ExperimentConfig:
    data = copy.deepcopy(base.to_dict())
    for key, value in cell.overrides.items():
        node = data
        parts = str(key).split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"sweep cell {cell.name!r}: unknown config section in {key!r}")
            node = node[p]
        node[parts[-1]] = value
    data["seed"] = seed
    data["name"] = cell.name
    data["output_dir"] = os.path.join(out_root, cell.name, f"seed_{seed}") if out_root else None
    return config_from_dict(data)


def _run_job(job: tuple[int, str, int, ExperimentConfig]) -> dict:
    cell_idx, cell_name, seed, cfg = job
    result = run_training(cfg, verbose=False)
    last = result.rows[-1] if result.rows else None
    first = result.rows[0] if result.rows else None
    return {
        "cell_idx":           cell_idx,
        "cell":               cell_name,
        "seed":               seed,
        "test_acc":           last.test_acc if last else float("nan"),
        "train_loss":         last.train_loss if last else float("nan"),
        "initial_train_loss": first.train_loss if first else float("nan"),
        "clean_train_loss":   last.clean_train_loss if last else float("nan"),
        "initial_clean_loss": result.initial_clean_loss,
        "converged":          bool(result.kpis.get("converged", False)),
        "lambda_final":       last.lambda_final_mean if last else float("nan"),
        "reg":                last.reg_mean if last else float("nan"),
    }


def sweep_threads() -> int:
    raw = os.environ.get("LUMIX_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LUMIX_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"LUMIX_THREADS must be >= 1, got {n}")
    return n


def aggregate(runs: pd.DataFrame) -> pd.DataFrame:
    metrics = ["test_acc", "train_loss", "lambda_final", "reg"]
    grouped = runs.sort_values(["cell_idx", "seed"]).groupby(["cell_idx", "cell"], sort=True)
    mean = grouped[metrics].mean().add_suffix("_mean")
    std = grouped[metrics].std(ddof=0).add_suffix("_std")
    table = pd.concat([mean, std], axis=1)[[f"{m}_{s}" for m in metrics for s in ("mean", "std")]]
    table["n_seeds"] = grouped.size()
    table["n_converged"] = grouped["converged"].sum().astype(int)
    return table.reset_index().drop(columns="cell_idx")


def run_sweep(base: ExperimentConfig, spec: SweepSpec, out_dir: str | None = None,
              verbose: bool = True) -> pd.DataFrame:
    base.validate()
    cells = spec.cells or [SweepCell(base.name)]
    out_root = os.path.join(out_dir, spec.name) if out_dir else None

    # every cell is validated before the first run starts
    jobs = [(i, cell.name, seed, cell_config(base, cell, seed, out_root))
            for i, cell in enumerate(cells) for seed in spec.seeds]
    threads = min(sweep_threads(), len(jobs))
    if verbose:
        print(f"[sweep] {spec.name}: {len(cells)} cells × {len(spec.seeds)} seeds on {threads} worker(s)")

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_run_job(job))
            if verbose:
                print(f"[sweep]   {job[1]:24s} seed {job[2]}  test_acc {records[-1]['test_acc']:.4f}")

    runs = pd.DataFrame(records)
    table = aggregate(runs)
    if out_root:
        write_csv(runs.drop(columns="cell_idx"), os.path.join(out_root, "runs.csv"), schema=SWEEP_SCHEMA)
        write_csv(table, os.path.join(out_root, "sweep.csv"), schema=SWEEP_SCHEMA)
        if verbose:
            print(f"[sweep] Results → {os.path.join(out_root, 'sweep.csv')}")
    if verbose:
        print_sweep_table(table, spec.name)
    return table


def print_sweep_table(table: pd.DataFrame, title: str) -> None:
    print(f"\n── Sweep: {title} ─────────────────────────────────────────")
    print(f"{'Cell':26s}  {'test acc':>16s}  {'train loss':>16s}  {'mean λ':>7s}  {'seeds':>5s}")
    print("─" * 78)
    for r in table.itertuples(index=False):
        acc = f"{r.test_acc_mean:.4f} ± {r.test_acc_std:.4f}"
        loss = f"{r.train_loss_mean:.4f} ± {r.train_loss_std:.4f}"
        print(f"{r.cell:26s}  {acc:>16s}  {loss:>16s}  {r.lambda_final_mean:>7.3f}  {r.n_seeds:>5d}")


# ── Main ──────────────────────────────────────────────────────────────────────

def main():
    parser = argparse.ArgumentParser(description="Run an ablation sweep")
    parser.add_argument("--config", default="src/config/base.yaml")
    parser.add_argument("--spec", default=None)
    parser.add_argument("--out", default="data/outputs/sweeps")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    args = parser.parse_args()

    run_sweep(load_config(args.config, args.overrides), load_sweep_spec(args.spec), out_dir=args.out)


if __name__ == "__main__":
    main()
