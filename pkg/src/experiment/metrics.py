"""
metrics.py
----------
Per-epoch training metrics and the files a run leaves behind.

Outputs (in the run's output directory)
---------------------------------------
  metrics.csv   one row per epoch, deterministic given (config, seed);
                first line is the schema tag ``# lumix-metrics v1``
  timing.csv    wall-clock seconds per epoch (kept apart: not reproducible)
  run_kpis.yaml end-of-run summary

Usage
-----
    PYTHONPATH=src python -m experiment.metrics --run-dir data/outputs/base
"""

from __future__ import annotations

import argparse
import dataclasses
import os
from dataclasses import dataclass

import pandas as pd
import yaml

METRICS_SCHEMA = "lumix-metrics v1"
METRICS_COLUMNS = (
    "epoch", "train_loss", "train_acc", "test_acc",
    "lambda0_mean", "lambda_r_mean", "lambda_s_mean", "lambda_final_mean", "lambda_final_std",
    "reg_mean", "clean_train_loss",
)


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    lambda0_mean: float = 0.0
    lambda_r_mean: float = 0.0
    lambda_s_mean: float = 0.0
    lambda_final_mean: float = 0.0
    lambda_final_std: float = 0.0
    reg_mean: float = 0.0
    clean_train_loss: float = 0.0
    seconds: float = 0.0


def metrics_frame(rows: list[MetricsRow]) -> pd.DataFrame:
    records = [dataclasses.asdict(r) for r in rows]
    return pd.DataFrame(records, columns=[*METRICS_COLUMNS, "seconds"])


def write_csv(df: pd.DataFrame, path: str, schema: str | None = None) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        if schema:
            f.write(f"# {schema}\n")
        df.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def run_kpis(rows: list[MetricsRow], initial_clean_loss: float | None = None) -> dict:
    """``converged``: final clean train loss below a third of the initial one
    (the untrained model's when given, else epoch 1's)."""
    if not rows:
        return {"epochs": 0}
    first, last = rows[0], rows[-1]
    initial = first.clean_train_loss if initial_clean_loss is None else initial_clean_loss
    return {
        "epochs":             len(rows),
        "initial_train_loss": float(first.train_loss),
        "final_train_loss":   float(last.train_loss),
        "initial_clean_loss": float(initial),
        "final_clean_loss":   float(last.clean_train_loss),
        "converged":          bool(last.clean_train_loss < initial / 3.0),
        "final_test_acc":     float(last.test_acc),
        "best_test_acc":      float(max(r.test_acc for r in rows)),
        "final_lambda_mean":  float(last.lambda_final_mean),
    }


def save_metrics(rows: list[MetricsRow], out_dir: str, verbose: bool = True,
                 initial_clean_loss: float | None = None) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    df = metrics_frame(rows)

    metrics_file = os.path.join(out_dir, "metrics.csv")
    write_csv(df[list(METRICS_COLUMNS)], metrics_file, schema=METRICS_SCHEMA)
    write_csv(df[["epoch", "seconds"]], os.path.join(out_dir, "timing.csv"))
    if verbose:
        print(f"[metrics] Saved epoch metrics → {metrics_file}")

    kpis = run_kpis(rows, initial_clean_loss)
    kpi_file = os.path.join(out_dir, "run_kpis.yaml")
    with open(kpi_file, "w") as f:
        yaml.safe_dump(kpis, f, default_flow_style=False)
    if verbose:
        print(f"[metrics] Saved KPIs → {kpi_file}")
    return kpis


def print_kpis(kpis: dict) -> None:
    print("\n── Run KPIs ───────────────────────────────────────────")
    for k, v in kpis.items():
        print(f"  {k:24s}: {v:.4f}" if isinstance(v, float) else f"  {k:24s}: {v}")
    print("────────────────────────────────────────────────────────")


def main():
    parser = argparse.ArgumentParser(description="Summarise a finished run directory")
    parser.add_argument("--run-dir", required=True)
    args = parser.parse_args()

    df = read_csv(os.path.join(args.run_dir, "metrics.csv"))
    rows = [MetricsRow(**{k: r[k] for k in METRICS_COLUMNS}) for r in df.to_dict("records")]
    print_kpis(run_kpis(rows))


if __name__ == "__main__":
    main()
