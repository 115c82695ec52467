"""
lumix.py
--------
Label-uncertainty mixing: perturbed label weights and the positive-class
hinge regulariser.

Per sample (A = row i, B = row pairing[i]):

    λr   ~ Beta(αr, αr)            or clamp(N(μ, σ), 0, 1)
    λs   = p̂_A / (p̂_A + p̂_B)      p̂ = softmax(logits), detached
    λ    = clamp((1 − r1 − r2)·λ0 + r1·λr + r2·λs, 0, 1)
    ỹ    = λ·y_A + (1 − λ)·y_B
    b_k  = 1 iff k is the true class of A or of B   (``positive_rule="or"``)
    R    = Σ_k ỹ_k · max(0, b_k − p̂_k)
    L    = L0(logits, ỹ) + η·mean_b(R)

λ is the weight of sample A in both the label mix and λs.  Writing it for B
instead (λ → 1 − λ, p̂_B in the λs numerator) is the same method with the
roles swapped.

Ablation switches map onto the ratios: ``lambda_r_dist="none"`` zeroes r1,
``enable_lambda_s=False`` zeroes r2; the freed weight stays on λ0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from augment.mixing import MixPlan
from augment.sampling import RngStream
from common.errors import ConfigError, LabelError, ShapeError
from model.losses import LOSSES, LossOutput, check_simplex, softmax

LAMBDA_R_DISTS = ("beta", "gaussian", "none")
LOSS_KINDS = tuple(LOSSES)
POSITIVE_RULES = ("or", "and")
TINY_PROB = 1e-300


@dataclass
class LumixConfig:
    alpha0: float = 0.8
    lambda_r_dist: str = "beta"
    alpha_r: float = 2.0
    gaussian_mu: float = 0.0
    gaussian_sigma: float = 1.0
    r1: float = 0.4
    r2: float = 0.1
    eta: float = 1.0
    smoothing_eps: float = 0.1
    loss_kind: str = "softmax_ce"
    enable_lambda_s: bool = True
    enable_reg: bool = True
    positive_rule: str = "or"

    def validate(self) -> None:
        reals = ("alpha0", "alpha_r", "gaussian_mu", "gaussian_sigma", "r1", "r2", "eta", "smoothing_eps")
        for key in reals:
            if not np.isfinite(getattr(self, key)):
                raise ConfigError(f"lumix.{key} must be finite")
        if self.alpha0 <= 0 or self.alpha_r <= 0:
            raise ConfigError("lumix.alpha0 and lumix.alpha_r must be > 0")
        if self.gaussian_sigma < 0:
            raise ConfigError("lumix.gaussian_sigma must be >= 0")
        if self.r1 < 0 or self.r2 < 0:
            raise ConfigError(f"lumix.r1/r2 must be >= 0, got r1={self.r1}, r2={self.r2}")
        if self.r1 + self.r2 > 1.0:
            raise ConfigError(f"lumix.r1 + lumix.r2 must be <= 1, got {self.r1 + self.r2:g}")
        if self.eta < 0:
            raise ConfigError("lumix.eta must be >= 0")
        if not 0.0 <= self.smoothing_eps < 1.0:
            raise ConfigError("lumix.smoothing_eps must be in [0, 1)")
        if self.lambda_r_dist not in LAMBDA_R_DISTS:
            raise ConfigError(f"lumix.lambda_r_dist must be one of {LAMBDA_R_DISTS}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"lumix.loss_kind must be one of {LOSS_KINDS}")
        if self.positive_rule not in POSITIVE_RULES:
            raise ConfigError(f"lumix.positive_rule must be one of {POSITIVE_RULES}")

    @property
    def effective_ratios(self) -> tuple[float, float]:
        r1 = self.r1 if self.lambda_r_dist != "none" else 0.0
        r2 = self.r2 if self.enable_lambda_s else 0.0
        return r1, r2


@dataclass
class LabelBatch:
    rows: np.ndarray            # (B, C)
    classes: np.ndarray         # (B,) true class per row
    smoothing_eps: float = 0.0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def num_classes(self) -> int:
        return self.rows.shape[1]

    def take(self, index: np.ndarray) -> "LabelBatch":
        return LabelBatch(self.rows[index], self.classes[index], self.smoothing_eps)


@dataclass
class LambdaBreakdown:
    lambda0: np.ndarray
    lambda_r: np.ndarray
    lambda_s: np.ndarray
    lambda_final: np.ndarray
    base_loss: float = 0.0
    reg: np.ndarray = field(default_factory=lambda: np.zeros(0))
    targets: np.ndarray | None = None

    @property
    def tau(self) -> np.ndarray:
        """Label-space perturbation actually applied: λ − λ0."""
        return self.lambda_final - self.lambda0

    def summary(self) -> dict[str, float]:
        stats = {}
        for key in ("lambda0", "lambda_r", "lambda_s", "lambda_final"):
            v = getattr(self, key)
            stats[f"{key}_mean"] = float(v.mean()) if v.size else 0.0
            stats[f"{key}_std"] = float(v.std()) if v.size else 0.0
        stats["reg_mean"] = float(self.reg.mean()) if self.reg.size else 0.0
        return stats


# ── Labels ────────────────────────────────────────────────────────────────────

def build_labels(class_idx, num_classes: int, smoothing_eps: float = 0.0) -> LabelBatch:
    idx = np.asarray(class_idx, dtype=np.int64).reshape(-1)
    if num_classes < 2:
        raise LabelError(f"need at least 2 classes, got {num_classes}")
    if np.any((idx < 0) | (idx >= num_classes)):
        raise LabelError(f"class index out of range [0, {num_classes}): {idx[(idx < 0) | (idx >= num_classes)][:5]}")
    if not 0.0 <= smoothing_eps < 1.0:
        raise LabelError(f"smoothing_eps must be in [0, 1), got {smoothing_eps}")
    off = smoothing_eps / num_classes
    rows = np.full((idx.size, num_classes), off)
    rows[np.arange(idx.size), idx] = 1.0 - smoothing_eps + off
    return LabelBatch(rows, idx, smoothing_eps)


def mix_labels(ya: np.ndarray, yb: np.ndarray, lambda_final) -> np.ndarray:
    ya = np.asarray(ya, dtype=np.float64)
    yb = np.asarray(yb, dtype=np.float64)
    if ya.shape != yb.shape:
        raise ShapeError(f"mix_labels: {ya.shape} vs {yb.shape}")
    lam = np.asarray(lambda_final, dtype=np.float64)
    if lam.ndim == 1:
        lam = lam[:, None]
    return lam * ya + (1.0 - lam) * yb


def _positives(y: np.ndarray) -> np.ndarray:
    pos = y > y.min(axis=-1, keepdims=True)
    if np.any(~pos.any(axis=-1)):
        raise LabelError("positive_mask: label row is uniform, no positive class detectable")
    return pos


def positive_mask(ya: np.ndarray, yb: np.ndarray, rule: str = "or") -> np.ndarray:
    pa = _positives(np.asarray(ya))
    pb = _positives(np.asarray(yb))
    b = (pa | pb) if rule == "or" else (pa & pb)
    return b.astype(np.float64)


# ── λ components ──────────────────────────────────────────────────────────────

def compute_lambda_s(probs: np.ndarray, idx_a, idx_b):
    """p̂_A / (p̂_A + p̂_B); 0.5 for self-pairs and doubly-vanishing mass."""
    probs = np.asarray(probs, dtype=np.float64)
    ia = np.asarray(idx_a)
    ib = np.asarray(idx_b)
    pa = np.take_along_axis(probs, ia[..., None], axis=-1)[..., 0]
    pb = np.take_along_axis(probs, ib[..., None], axis=-1)[..., 0]
    degenerate = (ia == ib) | ((pa < TINY_PROB) & (pb < TINY_PROB))
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_s = np.where(degenerate, 0.5, pa / np.where(degenerate, 1.0, pa + pb))
    return float(lam_s) if lam_s.ndim == 0 else lam_s


def combine_lambda(lambda0, lambda_r, lambda_s, r1: float, r2: float):
    if r1 < 0 or r2 < 0 or r1 + r2 > 1.0:
        raise ConfigError(f"invalid ratios r1={r1}, r2={r2}")
    lam = (1.0 - r1 - r2) * np.asarray(lambda0, dtype=np.float64) + r1 * np.asarray(lambda_r) + r2 * np.asarray(lambda_s)
    lam = np.clip(lam, 0.0, 1.0)
    return float(lam) if lam.ndim == 0 else lam


def sample_lambda_r(cfg: LumixConfig, n: int, rng: RngStream) -> np.ndarray:
    if cfg.lambda_r_dist == "beta":
        return np.asarray(rng.beta(cfg.alpha_r, cfg.alpha_r, size=n))
    if cfg.lambda_r_dist == "gaussian":
        return np.clip(rng.gaussian(cfg.gaussian_mu, cfg.gaussian_sigma, size=n), 0.0, 1.0)
    return np.zeros(n)


# ── Regulariser ───────────────────────────────────────────────────────────────

def regularizer(probs: np.ndarray, y: np.ndarray, b: np.ndarray):
    """R = Σ_k y_k·max(0, b_k − p̂_k), per row."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != np.shape(y) or probs.shape != np.shape(b):
        raise ShapeError("regularizer: probs, y and b must share a shape")
    r = (y * np.maximum(0.0, b - probs)).sum(axis=-1)
    return float(r) if r.ndim == 0 else r


def regularizer_logits_grad(probs: np.ndarray, y: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d R / d logits per row, through the softmax Jacobian."""
    active = (b - probs) > 0.0
    g = np.where(active, -y, 0.0)                      # dR/dp̂
    return probs * (g - (g * probs).sum(axis=-1, keepdims=True))


# ── Full loss ─────────────────────────────────────────────────────────────────

def lumix_loss(logits: np.ndarray, labels_a: LabelBatch, labels_b: LabelBatch, plan: MixPlan,
               cfg: LumixConfig, rng: RngStream) -> tuple[LossOutput, LambdaBreakdown]:
    cfg.validate()
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    if len(labels_a) != n or len(labels_b) != n or labels_a.rows.shape != logits.shape:
        raise ShapeError(f"lumix_loss: labels ({len(labels_a)}, {len(labels_b)}) vs logits {logits.shape}")
    check_simplex(labels_a.rows, "labels_a")
    check_simplex(labels_b.rows, "labels_b")
    lambda0 = np.broadcast_to(np.asarray(plan.lambda0, dtype=np.float64), (n,)).copy()

    probs = softmax(logits)
    detached = probs.copy()
    r1, r2 = cfg.effective_ratios

    lambda_r = sample_lambda_r(cfg, n, rng) if r1 > 0.0 else np.zeros(n)
    lambda_s = compute_lambda_s(detached, labels_a.classes, labels_b.classes)
    lam = combine_lambda(lambda0, lambda_r, lambda_s, r1, r2)
    targets = mix_labels(labels_a.rows, labels_b.rows, lam)

    base = LOSSES[cfg.loss_kind](logits, targets)
    value = base.value
    grad = base.logits_grad
    reg = np.zeros(n)
    if cfg.enable_reg:
        b = positive_mask(labels_a.rows, labels_b.rows, cfg.positive_rule)
        reg = regularizer(probs, targets, b)
        value = value + cfg.eta * float(reg.mean())
        grad = grad + cfg.eta * regularizer_logits_grad(probs, targets, b) / n

    breakdown = LambdaBreakdown(lambda0=lambda0, lambda_r=lambda_r, lambda_s=np.asarray(lambda_s),
                                lambda_final=np.asarray(lam), base_loss=base.value, reg=reg, targets=targets)
    return LossOutput(value=value, logits_grad=grad), breakdown
