"""
losses.py
---------
Softmax and the two soft-label losses used for training.

    soft_ce_loss:  mean_b  −Σ_k y_bk log softmax(z_b)_k      grad (p̂ − y)/B
    bce_loss:      mean_bk  softplus(z) − y·z                 grad (σ(z) − y)/(B·C)

The cross-entropy gradient is the fused (p̂ − y) form rather than the
composition of log and softmax derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from common.errors import LabelError, NonFiniteError, ShapeError

SIMPLEX_TOL = 1e-9


@dataclass
class LossOutput:
    value: float
    logits_grad: np.ndarray


def _check_logits(logits: np.ndarray, where: str) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"{where}: logits must be (B, C) with C >= 2, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        bad = np.argwhere(~np.isfinite(logits))[0]
        raise NonFiniteError(f"{where}: non-finite logit at index {tuple(int(i) for i in bad)}")
    return logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = _check_logits(logits, "softmax")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def check_simplex(targets: np.ndarray, where: str = "targets", tol: float = SIMPLEX_TOL) -> None:
    if np.any(targets < -tol):
        raise LabelError(f"{where}: negative entry {targets.min():.3e}")
    drift = np.abs(targets.sum(axis=-1) - 1.0)
    if np.any(drift > tol):
        raise LabelError(f"{where}: row {int(drift.argmax())} sums off the simplex by {drift.max():.3e}")


def _as_rows(targets) -> np.ndarray:
    rows = getattr(targets, "rows", targets)
    return np.asarray(rows, dtype=np.float64)


def soft_ce_loss(logits: np.ndarray, targets) -> LossOutput:
    logits = _check_logits(logits, "soft_ce_loss")
    y = _as_rows(targets)
    if y.shape != logits.shape:
        raise ShapeError(f"soft_ce_loss: targets {y.shape} vs logits {logits.shape}")
    check_simplex(y, "soft_ce_loss")
    b = logits.shape[0]
    logp = _log_softmax(logits)
    value = float(-(y * logp).sum() / b)
    grad = (np.exp(logp) - y) / b
    return LossOutput(value=value, logits_grad=grad)


def bce_loss(logits: np.ndarray, targets) -> LossOutput:
    logits = _check_logits(logits, "bce_loss")
    y = _as_rows(targets)
    if y.shape != logits.shape:
        raise ShapeError(f"bce_loss: targets {y.shape} vs logits {logits.shape}")
    if np.any((y < 0.0) | (y > 1.0)):
        raise LabelError("bce_loss: targets must lie in [0, 1]")
    n = logits.size
    # softplus(z) − y·z, written to stay finite for large |z|
    terms = np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * logits))
    return LossOutput(value=float(terms.sum() / n), logits_grad=(sig - y) / n)


LOSSES = {"softmax_ce": soft_ce_loss, "bce": bce_loss}
