"""
robustness.py
-------------
Occlusion and spatial-shuffle robustness of a trained model.

Both probes split each test image into a fixed grid×grid patch layout
(4×4 by default, i.e. 8×8-pixel patches on a 32×32 canvas).  A 1-pixel side
is left whole, so a 1×dim feature vector splits into grid column patches.

Occlusion
    Zero-masks round(fraction · grid²) patches per image, chosen by
      random            a fixed random ranking per image; larger fractions drop
                        a superset of the smaller ones
      salient_proxy     most salient patches first
      nonsalient_proxy  least salient patches first
    Saliency is the summed |∂ logit_pred / ∂ x| over a patch, taken from the
    model under test (``saliency_proxy = input_gradient``).  It stands in for
    attention maps of a pretrained vision transformer.
Shuffle
    Every image gets its own random patch permutation; grid 1 is a no-op.

Usage
-----
    PYTHONPATH=src python -m experiment.robustness --run-dir data/outputs/base
"""

from __future__ import annotations

import argparse
import math
import os

import numpy as np
import pandas as pd

from augment.mixing import patch_layout
from augment.sampling import RngStreams
from common.errors import ConfigError
from data.dataset import Dataset
from data.splits import load_splits
from experiment.config import INFO_LOSS_LEVELS, OCCLUSION_MODES, RobustnessConfig, load_config
from experiment.metrics import write_csv
from model.network import Model, load_model

SALIENCY_PROXY = "input_gradient"
ROBUSTNESS_SCHEMA = "lumix-robustness v1"


def patches_to_drop(fraction: float, n_patches: int) -> int:
    return int(math.floor(fraction * n_patches + 0.5))


def _patch_view(x: np.ndarray, grid: int) -> tuple[np.ndarray, int]:
    """(B, C, gy, ph, gx, pw) view of a batch and its patch count gy·gx."""
    gy, gx, ph, pw = patch_layout(x.shape[-2], x.shape[-1], grid)
    return x.reshape(x.shape[0], x.shape[1], gy, ph, gx, pw), gy * gx


def patch_saliency(model: Model, images: np.ndarray, grid: int) -> np.ndarray:
    """(B, patches) summed input-gradient magnitude of the predicted logit."""
    x = np.asarray(images, dtype=np.float64)
    logits = model.forward(x)
    seed_grad = np.zeros_like(logits)
    seed_grad[np.arange(len(x)), logits.argmax(axis=1)] = 1.0
    dx = model.backward(seed_grad)
    model.zero_grad()
    view, n_patches = _patch_view(np.abs(dx), grid)
    return view.sum(axis=(1, 3, 5)).reshape(len(x), n_patches)


def drop_patches(images: np.ndarray, grid: int, order: np.ndarray, k: int) -> np.ndarray:
    """Zero the patches ``order[:, :k]`` of every image."""
    x = np.array(images, dtype=np.float64, copy=True)
    view, n_patches = _patch_view(x, grid)
    keep = np.ones((len(x), n_patches))
    if k:
        np.put_along_axis(keep, np.asarray(order)[:, :k], 0.0, axis=1)
    gy, gx = view.shape[2], view.shape[4]
    view *= keep.reshape(len(x), 1, gy, 1, gx, 1)
    return x


def drop_order(model: Model, images: np.ndarray, mode: str, grid: int, seed: int) -> np.ndarray:
    """Per-image patch ranking, first entry dropped first."""
    _, n_patches = _patch_view(np.asarray(images)[:0], grid)
    if mode == "random":
        rng = RngStreams(seed).fresh("occlusion")
        return np.array([rng.permutation(n_patches) for _ in range(len(images))], dtype=np.int64).reshape(-1, n_patches)
    sal = patch_saliency(model, images, grid)
    if mode == "salient_proxy":
        return np.argsort(-sal, axis=1, kind="stable")
    return np.argsort(sal, axis=1, kind="stable")


def shuffle_batch(images: np.ndarray, grid: int, orders: np.ndarray) -> np.ndarray:
    """Patch slot i of image b receives that image's patch orders[b, i]."""
    x = np.asarray(images, dtype=np.float64)
    view, n_patches = _patch_view(x, grid)
    b, c, gy, ph, gx, pw = view.shape
    patches = view.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, n_patches, ph, pw)
    picked = np.take_along_axis(patches, np.asarray(orders)[:, None, :, None, None], axis=2)
    return picked.reshape(b, c, gy, gx, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(x.shape)


def eval_occlusion(model: Model, dataset: Dataset, info_loss_fraction: float, mode: str,
                   grid: int = 4, seed: int = 0, batch_size: int = 256) -> float:
    if mode not in OCCLUSION_MODES:
        raise ConfigError(f"occlusion mode must be one of {OCCLUSION_MODES}, got {mode!r}")
    if not any(abs(info_loss_fraction - lv) < 1e-9 for lv in INFO_LOSS_LEVELS):
        raise ConfigError(f"information loss must be one of {INFO_LOSS_LEVELS}, got {info_loss_fraction}")
    _, h, w = dataset.image_shape
    gy, gx, _, _ = patch_layout(h, w, grid)
    if len(dataset) == 0:
        return 0.0

    k = patches_to_drop(info_loss_fraction, gy * gx)
    if k == 0:
        pred = model.predict(dataset.images, batch_size)
        return float(np.mean(pred == dataset.labels))

    order = drop_order(model, dataset.images, mode, grid, seed) if mode == "random" else None
    correct = 0
    for start in range(0, len(dataset), batch_size):
        batch = dataset.images[start:start + batch_size]
        if order is not None:
            batch_order = order[start:start + batch_size]
        else:
            batch_order = drop_order(model, batch, mode, grid, seed)
        occluded = drop_patches(batch, grid, batch_order, k)
        correct += int(np.sum(model.forward(occluded).argmax(axis=1) == dataset.labels[start:start + batch_size]))
    return correct / len(dataset)


def eval_shuffle(model: Model, dataset: Dataset, grid: int, seed: int = 0, batch_size: int = 256) -> float:
    _, h, w = dataset.image_shape
    gy, gx, _, _ = patch_layout(h, w, grid)
    if len(dataset) == 0:
        return 0.0
    rng = RngStreams(seed).fresh("shuffle_eval")
    correct = 0
    for start in range(0, len(dataset), batch_size):
        batch = dataset.images[start:start + batch_size]
        orders = np.array([rng.permutation(gy * gx) for _ in range(len(batch))], dtype=np.int64)
        shuffled = shuffle_batch(batch, grid, orders)
        correct += int(np.sum(model.forward(shuffled).argmax(axis=1) == dataset.labels[start:start + batch_size]))
    return correct / len(dataset)


# ── Reports ───────────────────────────────────────────────────────────────────

def occlusion_report(model: Model, dataset: Dataset, rcfg: RobustnessConfig, seed: int = 0,
                     batch_size: int = 256, verbose: bool = True) -> pd.DataFrame:
    records = []
    for mode in rcfg.modes:
        for frac in rcfg.info_loss:
            acc = eval_occlusion(model, dataset, frac, mode, rcfg.patch_grid, seed, batch_size)
            records.append({"probe": "occlusion", "mode": mode, "info_loss": frac, "grid": rcfg.patch_grid,
                            "accuracy": acc, "saliency_proxy": SALIENCY_PROXY})
            if verbose:
                print(f"[robustness] occlusion {mode:17s} loss {frac:.1f}  acc {acc:.4f}")
    return pd.DataFrame(records)


def shuffle_report(model: Model, dataset: Dataset, grids: list[int], seed: int = 0,
                   batch_size: int = 256, verbose: bool = True) -> pd.DataFrame:
    records = []
    for grid in grids:
        acc = eval_shuffle(model, dataset, grid, seed, batch_size)
        records.append({"probe": "shuffle", "mode": "random", "info_loss": 0.0, "grid": grid,
                        "accuracy": acc, "saliency_proxy": SALIENCY_PROXY})
        if verbose:
            print(f"[robustness] shuffle grid {grid:2d}  acc {acc:.4f}")
    return pd.DataFrame(records)


def warn_if_not_monotone(report: pd.DataFrame, tolerance: float = 0.01) -> None:
    for mode, grp in report[report["probe"] == "occlusion"].groupby("mode", sort=False):
        acc = grp.sort_values("info_loss")["accuracy"].to_numpy()
        if np.any(np.diff(acc) > tolerance):
            print(f"[robustness] WARNING: {mode} accuracy rises by more than {tolerance:.0%} "
                  f"between consecutive information-loss levels")


def save_report(report: pd.DataFrame, path: str) -> str:
    write_csv(report, path, schema=ROBUSTNESS_SCHEMA)
    print(f"[robustness] Report → {path}")
    return path


def load_run(run_dir: str, overrides: list[str] | None = None):
    """(config, model, test split) of a finished ``train`` run directory."""
    cfg_file = os.path.join(run_dir, "config.yaml")
    model_file = os.path.join(run_dir, "model.npz")
    if not os.path.exists(model_file):
        raise ConfigError(f"run directory {run_dir} has no model.npz; train first")
    cfg = load_config(cfg_file, overrides)
    _, test = load_splits(cfg.dataset, cfg.seed)
    return cfg, load_model(model_file), test


# ── Main ──────────────────────────────────────────────────────────────────────

def main():
    parser = argparse.ArgumentParser(description="Occlusion + shuffle robustness of a trained run")
    parser.add_argument("--run-dir", required=True)
    args = parser.parse_args()

    cfg, model, test = load_run(args.run_dir)
    bs = cfg.optim.eval_batch_size
    report = pd.concat([
        occlusion_report(model, test, cfg.robustness, cfg.seed, bs),
        shuffle_report(model, test, cfg.robustness.shuffle_grids, cfg.seed, bs),
    ], ignore_index=True)
    warn_if_not_monotone(report)
    save_report(report, os.path.join(args.run_dir, "robustness.csv"))


if __name__ == "__main__":
    main()
