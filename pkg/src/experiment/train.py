"""
train.py
--------
Desk-scale training loop for one ExperimentConfig.

Per batch: shuffle order → MixPlan → mixed inputs → forward → loss
(plain smoothed-label loss for ``augment.mode=none``, lumix_loss otherwise)
→ backward → SGD step with linear warmup.

Every random draw comes from a named sub-stream of ``cfg.seed``:

    init         weight initialisation
    shuffle      per-epoch sample order
    lambda_r     label perturbation λr
    mode_switch, pairing, lambda0, box, patch_shuffle, patch_lambda
                 mix plans (see augment.mixing)

so two runs of the same (config, seed) write byte-identical metrics.csv.

Usage
-----
    PYTHONPATH=src python -m experiment.train --config src/config/base.yaml
"""

from __future__ import annotations

import argparse
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from augment.lumix import LambdaBreakdown, build_labels, lumix_loss
from augment.mixing import apply_mix_plan, build_mix_plan
from augment.sampling import RngStreams
from common.errors import NonFiniteError, TrainingDivergedError
from data.dataset import Dataset
from data.ppm import dump_mixed
from data.splits import load_splits
from experiment.config import ExperimentConfig, load_config, save_config
from experiment.metrics import MetricsRow, print_kpis, run_kpis, save_metrics
from model.losses import LOSSES, LossOutput, soft_ce_loss
from model.network import Model, build_model
from model.optim import SGD, WarmupSchedule, sgd_step

CLEAN_LOSS_SAMPLES = 2000


@dataclass
class TrainingResult:
    rows: list[MetricsRow]
    model: Model
    train: Dataset
    test: Dataset
    batch_losses: list[float] = field(default_factory=list)
    last_breakdown: LambdaBreakdown | None = None
    kpis: dict = field(default_factory=dict)
    initial_clean_loss: float = 0.0


def evaluate_accuracy(model: Model, dataset: Dataset, batch_size: int = 256) -> float:
    if len(dataset) == 0:
        return 0.0
    pred = model.predict(dataset.images, batch_size=batch_size)
    return float(np.mean(pred == dataset.labels))


def evaluate_clean_loss(model: Model, dataset: Dataset, batch_size: int = 256,
                        limit: int = CLEAN_LOSS_SAMPLES) -> float:
    """Hard-label softmax CE over the first ``limit`` samples, no mixing or smoothing."""
    n = min(len(dataset), limit)
    if n == 0:
        return 0.0
    onehot = np.eye(dataset.num_classes)
    total = 0.0
    try:
        for start in range(0, n, batch_size):
            stop = min(n, start + batch_size)
            out = soft_ce_loss(model.forward(dataset.images[start:stop]), onehot[dataset.labels[start:stop]])
            total += out.value * (stop - start)
    except NonFiniteError:
        return float("inf")
    return total / n


def plain_breakdown(n: int, base_loss: float, targets: np.ndarray) -> LambdaBreakdown:
    ones = np.ones(n)
    return LambdaBreakdown(lambda0=ones, lambda_r=np.zeros(n), lambda_s=np.zeros(n), lambda_final=ones,
                           base_loss=base_loss, reg=np.zeros(n), targets=targets)


def _dump_divergence(cfg: ExperimentConfig, out_dir: str | None, epoch: int, step: int,
                     breakdown: LambdaBreakdown | None, reason: str) -> str | None:
    if not out_dir:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "divergence.yaml")
    dump = {
        "reason": reason,
        "epoch": epoch,
        "step": step,
        "last_breakdown": breakdown.summary() if breakdown is not None else None,
        "config": cfg.to_dict(),
    }
    with open(path, "w") as f:
        yaml.safe_dump(dump, f, default_flow_style=False, sort_keys=False)
    return path


def run_training(cfg: ExperimentConfig, verbose: bool = True, dump_mixed_n: int = 0,
                 splits: tuple[Dataset, Dataset] | None = None) -> TrainingResult:
    cfg.validate()
    out_dir = cfg.output_dir
    streams = RngStreams(cfg.seed)
    train, test = splits if splits is not None else load_splits(cfg.dataset, cfg.seed, verbose=verbose)

    m, o = cfg.model, cfg.optim
    model = build_model(m.arch, train.image_shape, train.num_classes, rng=streams.stream("init"),
                        hidden=m.hidden, conv_channels=m.conv_channels, conv_hidden=m.conv_hidden)
    optimizer = SGD(model, lr=o.lr, momentum=o.momentum, weight_decay=o.weight_decay)
    n_batches = math.ceil(len(train) / o.batch_size)
    schedule = WarmupSchedule(o.lr, o.warmup_epochs * n_batches)
    loss_fn = LOSSES[cfg.lumix.loss_kind]
    lambda_r_rng = streams.stream("lambda_r")
    _, h, w = train.image_shape

    if out_dir:
        save_config(cfg, out_dir)
    if verbose:
        print(f"[train] {cfg.name}: seed {cfg.seed}, mode {cfg.augment.mode}, {o.epochs} epochs × {n_batches} batches")
        print(f"[train] {model.summary()}")

    initial_clean = evaluate_clean_loss(model, train, o.eval_batch_size)
    rows: list[MetricsRow] = []
    batch_losses: list[float] = []
    breakdown: LambdaBreakdown | None = None
    step = 0

    for epoch in range(o.epochs):
        t0 = time.perf_counter()
        order = streams.stream("shuffle").permutation(len(train))
        loss_sum = correct = seen = 0.0
        lam_sums = {"lambda0": 0.0, "lambda_r": 0.0, "lambda_s": 0.0, "lambda_final": 0.0, "reg": 0.0}
        lam_final_all = []

        for b in range(n_batches):
            idx = order[b * o.batch_size:(b + 1) * o.batch_size]
            n = len(idx)
            labels = build_labels(train.labels[idx], train.num_classes, cfg.lumix.smoothing_eps)
            plan = build_mix_plan(n, h, w, cfg.augment, cfg.lumix.alpha0, streams)
            mixed = apply_mix_plan(train.images[idx], plan)

            if dump_mixed_n and epoch == 0 and b == 0:
                if out_dir:
                    paths = dump_mixed(os.path.join(out_dir, "mixed"), mixed, dump_mixed_n)
                    if verbose:
                        print(f"[train] Mixed samples → {len(paths)} PPM files in {os.path.join(out_dir, 'mixed')}")
                else:
                    print("[train] WARNING: --dump-mixed needs an output directory, skipping")

            try:
                logits = model.forward(mixed)
                if plan.mode == "none":
                    out: LossOutput = loss_fn(logits, labels.rows)
                    breakdown = plain_breakdown(n, out.value, labels.rows)
                else:
                    out, breakdown = lumix_loss(logits, labels, labels.take(plan.pairing), plan,
                                                cfg.lumix, lambda_r_rng)
            except NonFiniteError as e:
                path = _dump_divergence(cfg, out_dir, epoch, step, breakdown, str(e))
                raise TrainingDivergedError(f"non-finite logits at epoch {epoch} step {step}"
                                            + (f" (diagnostics → {path})" if path else "")) from e
            if not np.isfinite(out.value):
                path = _dump_divergence(cfg, out_dir, epoch, step, breakdown, f"loss = {out.value}")
                raise TrainingDivergedError(f"loss {out.value} at epoch {epoch} step {step}"
                                            + (f" (diagnostics → {path})" if path else ""))

            model.backward(out.logits_grad)
            sgd_step(model, optimizer, schedule.step(step))
            step += 1

            batch_losses.append(out.value)
            loss_sum += out.value * n
            correct += float(np.sum(logits.argmax(axis=1) == breakdown.targets.argmax(axis=1)))
            seen += n
            for key in ("lambda0", "lambda_r", "lambda_s", "lambda_final"):
                lam_sums[key] += float(getattr(breakdown, key).sum())
            lam_sums["reg"] += float(breakdown.reg.sum())
            lam_final_all.append(breakdown.lambda_final)

        lam_final = np.concatenate(lam_final_all)
        row = MetricsRow(
            epoch=epoch + 1,
            train_loss=loss_sum / seen,
            train_acc=correct / seen,
            test_acc=evaluate_accuracy(model, test, o.eval_batch_size),
            lambda0_mean=lam_sums["lambda0"] / seen,
            lambda_r_mean=lam_sums["lambda_r"] / seen,
            lambda_s_mean=lam_sums["lambda_s"] / seen,
            lambda_final_mean=lam_sums["lambda_final"] / seen,
            lambda_final_std=float(lam_final.std()),
            reg_mean=lam_sums["reg"] / seen,
            clean_train_loss=evaluate_clean_loss(model, train, o.eval_batch_size),
            seconds=time.perf_counter() - t0,
        )
        rows.append(row)
        if verbose:
            print(f"[train] epoch {row.epoch:3d}/{o.epochs}  loss {row.train_loss:.4f}  "
                  f"train_acc {row.train_acc:.3f}  test_acc {row.test_acc:.3f}  "
                  f"λ0 {row.lambda0_mean:.3f} λr {row.lambda_r_mean:.3f} λs {row.lambda_s_mean:.3f} "
                  f"λ {row.lambda_final_mean:.3f}  R {row.reg_mean:.4f}  ({row.seconds:.1f}s)")

    result = TrainingResult(rows, model, train, test, batch_losses, breakdown, initial_clean_loss=initial_clean)
    result.kpis = run_kpis(rows, initial_clean)
    if out_dir:
        save_metrics(rows, out_dir, verbose=verbose, initial_clean_loss=initial_clean)
        model_file = os.path.join(out_dir, "model.npz")
        model.save(model_file)
        if verbose:
            print(f"[train] Model → {model_file}")
    return result


# ── Main ──────────────────────────────────────────────────────────────────────

def main():
    parser = argparse.ArgumentParser(description="Train one configuration")
    parser.add_argument("--config", default="src/config/base.yaml")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    args = parser.parse_args()

    cfg = load_config(args.config, args.overrides)
    if cfg.output_dir is None:
        cfg.output_dir = os.path.join("data", "outputs", cfg.name)
    result = run_training(cfg)
    print_kpis(result.kpis)


if __name__ == "__main__":
    main()
