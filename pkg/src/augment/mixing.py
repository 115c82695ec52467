"""
mixing.py
---------
Input-space mixing: Mixup interpolation, CutMix boxes with boundary clipping,
and the two randomised variants (patch shuffling, per-patch λ).

Conventions
-----------
  images        (B, C, H, W) float64, or a single (C, H, W) image
  sample A      batch row i;   sample B = row pairing[i]
  λ0            weight of A.   CutMix copies the box from A, the rest from B,
                so λ0 = w·h / (H·W) after clipping.
  box           half-open [x0, x0+w) × [y0, y0+h); x indexes W, y indexes H
  box size      w = round(W·√λ0), h = round(H·√λ0), round half up
  box centre    cx ~ integers[0, W), cy ~ integers[0, H); x0 = cx − w//2,
                then both edges clipped into the image
  patch index   p = gy·grid + gx (row-major over the grid)

All random draws for a batch are materialised in a ``MixPlan``;
``apply_mix_plan`` is then a pure function of (images, plan).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from augment.sampling import RngStream, RngStreams
from common.errors import ConfigError, ShapeError

MIX_MODES = ("none", "mixup", "cutmix", "cutmix_mixup", "cutmix_shuffle", "per_patch_lambda")
LAMBDA0_DISTS = ("beta", "uniform")


@dataclass(frozen=True)
class CropBox:
    x0: int
    y0: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def check(self, height: int, width: int) -> None:
        if not (0 <= self.x0 and self.x0 + self.w <= width and 0 <= self.y0 and self.y0 + self.h <= height
                and self.w >= 0 and self.h >= 0):
            raise ShapeError(f"box {self} does not fit a {height}x{width} image")

    def mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[self.y0:self.y0 + self.h, self.x0:self.x0 + self.w] = True
        return m


@dataclass
class AugmentConfig:
    mode: str = "cutmix"
    lambda0_dist: str = "beta"
    switch_prob: float = 0.5
    shuffle_grid: int = 4
    patch_grid: int = 4

    def validate(self) -> None:
        if self.mode not in MIX_MODES:
            raise ConfigError(f"augment.mode must be one of {MIX_MODES}, got {self.mode!r}")
        if self.lambda0_dist not in LAMBDA0_DISTS:
            raise ConfigError(f"augment.lambda0_dist must be one of {LAMBDA0_DISTS}, got {self.lambda0_dist!r}")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise ConfigError(f"augment.switch_prob must be in [0, 1], got {self.switch_prob}")
        for key in ("shuffle_grid", "patch_grid"):
            if getattr(self, key) < 1:
                raise ConfigError(f"augment.{key} must be >= 1")


@dataclass
class MixPlan:
    mode: str
    pairing: np.ndarray          # (B,) permutation
    lambda0: np.ndarray          # (B,) weight of sample A after clipping
    box: CropBox | None = None
    shuffle_grid: int = 1
    shuffle_orders: np.ndarray | None = None   # (B, grid²)
    patch_grid: int = 1
    patch_lambdas: np.ndarray | None = None    # (B, grid²)


# ── Helpers ───────────────────────────────────────────────────────────────────

def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _check_pair(xa: np.ndarray, xb: np.ndarray, where: str) -> None:
    if xa.shape != xb.shape:
        raise ShapeError(f"{where}: shape mismatch {xa.shape} vs {xb.shape}")
    if xa.ndim < 2 or xa.shape[-1] < 1 or xa.shape[-2] < 1:
        raise ShapeError(f"{where}: images need (…, H, W) with H, W >= 1, got {xa.shape}")


def check_grid(height: int, width: int, grid: int) -> tuple[int, int]:
    """Patch (height, width) for a grid×grid split; rejects indivisible grids."""
    if grid < 1 or height % grid or width % grid:
        raise ShapeError(f"grid {grid} does not divide a {height}x{width} image")
    return height // grid, width // grid


def patch_layout(height: int, width: int, grid: int) -> tuple[int, int, int, int]:
    """(rows, cols, patch_h, patch_w) of a grid split that leaves 1-pixel sides whole.

    Feature-vector "images" (H = 1) split into ``grid`` column patches.
    """
    gy = 1 if height == 1 else grid
    gx = 1 if width == 1 else grid
    if grid < 1 or height % gy or width % gx:
        raise ShapeError(f"grid {grid} does not divide a {height}x{width} image")
    return gy, gx, height // gy, width // gx


# ── CutMix ────────────────────────────────────────────────────────────────────

def sample_cutmix_box(height: int, width: int, lambda0_raw: float, rng: RngStream) -> tuple[CropBox, float]:
    if not 0.0 <= lambda0_raw <= 1.0:
        raise ValueError(f"lambda0_raw must be in [0, 1], got {lambda0_raw}")
    cut = math.sqrt(lambda0_raw)
    w = _round_half_up(width * cut)
    h = _round_half_up(height * cut)
    cx = int(rng.integers(0, width))
    cy = int(rng.integers(0, height))
    x0, y0 = cx - w // 2, cy - h // 2
    x1, y1 = min(max(x0 + w, 0), width), min(max(y0 + h, 0), height)
    x0, y0 = min(max(x0, 0), width), min(max(y0, 0), height)
    box = CropBox(x0, y0, x1 - x0, y1 - y0)
    return box, box.area / (height * width)


def apply_cutmix(xa: np.ndarray, xb: np.ndarray, box: CropBox) -> np.ndarray:
    _check_pair(xa, xb, "apply_cutmix")
    box.check(xa.shape[-2], xa.shape[-1])
    out = np.array(xb, dtype=np.float64, copy=True)
    ys = slice(box.y0, box.y0 + box.h)
    xs = slice(box.x0, box.x0 + box.w)
    out[..., ys, xs] = xa[..., ys, xs]
    return out


# ── Mixup ─────────────────────────────────────────────────────────────────────

def apply_mixup(xa: np.ndarray, xb: np.ndarray, lambda0) -> np.ndarray:
    _check_pair(xa, xb, "apply_mixup")
    lam = np.asarray(lambda0, dtype=np.float64)
    if np.any((lam < 0.0) | (lam > 1.0)):
        raise ValueError("apply_mixup: lambda must be in [0, 1]")
    if lam.ndim == 1:
        lam = lam.reshape(-1, *([1] * (xa.ndim - 1)))
    return lam * xa + (1.0 - lam) * xb


# ── Patch variants ────────────────────────────────────────────────────────────

def _to_patches(x: np.ndarray, grid: int) -> np.ndarray:
    *lead, h, w = x.shape
    ph, pw = check_grid(h, w, grid)
    p = x.reshape(*lead, grid, ph, grid, pw)
    n = len(lead)
    p = np.moveaxis(p, [n, n + 2], [n, n + 1])          # (…, gy, gx, ph, pw)
    return p.reshape(*lead, grid * grid, ph, pw)


def _from_patches(p: np.ndarray, grid: int) -> np.ndarray:
    *lead, _, ph, pw = p.shape
    n = len(lead)
    x = p.reshape(*lead, grid, grid, ph, pw)
    x = np.moveaxis(x, [n + 1, n + 2], [n + 2, n + 1])  # (…, gy, ph, gx, pw)
    return x.reshape(*lead, grid * ph, grid * pw)


def permute_patches(x: np.ndarray, grid: int, order: np.ndarray) -> np.ndarray:
    """Output patch slot i receives input patch order[i]."""
    patches = _to_patches(np.asarray(x, dtype=np.float64), grid)
    order = np.asarray(order)
    if sorted(order.tolist()) != list(range(grid * grid)):
        raise ValueError("patch order must be a permutation of range(grid²)")
    return _from_patches(patches[..., order, :, :], grid)


def shuffle_patches(x: np.ndarray, grid: int, rng: RngStream) -> np.ndarray:
    check_grid(x.shape[-2], x.shape[-1], grid)
    return permute_patches(x, grid, rng.permutation(grid * grid))


def mix_patches(xa: np.ndarray, xb: np.ndarray, grid: int, lambdas: np.ndarray) -> np.ndarray:
    """Per-patch linear mix; patch p uses weight lambdas[p] for ``xa``."""
    _check_pair(xa, xb, "mix_patches")
    ph, pw = check_grid(xa.shape[-2], xa.shape[-1], grid)
    lam_map = np.kron(np.asarray(lambdas, dtype=np.float64).reshape(grid, grid), np.ones((ph, pw)))
    return lam_map * xa + (1.0 - lam_map) * xb


def per_patch_lambda_mix(xa: np.ndarray, xb: np.ndarray, grid: int, alpha0: float,
                         rng: RngStream) -> tuple[np.ndarray, float]:
    check_grid(xa.shape[-2], xa.shape[-1], grid)
    lambdas = np.asarray(rng.beta(alpha0, alpha0, size=grid * grid))
    return mix_patches(xa, xb, grid, lambdas), float(lambdas.mean())


# ── Batch plans ───────────────────────────────────────────────────────────────

def _sample_lambda0(aug: AugmentConfig, alpha0: float, streams: RngStreams) -> float:
    stream = streams.stream("lambda0")
    if aug.lambda0_dist == "uniform":
        return float(stream.uniform())
    return stream.beta(alpha0, alpha0)


def build_mix_plan(batch_size: int, height: int, width: int, aug: AugmentConfig,
                   alpha0: float, streams: RngStreams) -> MixPlan:
    """Draw every random quantity one batch needs (single-threaded)."""
    mode = aug.mode
    if mode == "none":
        return MixPlan(mode, np.arange(batch_size), np.ones(batch_size))
    if mode == "cutmix_mixup":
        mode = "cutmix" if streams.stream("mode_switch").choice_bool(aug.switch_prob) else "mixup"

    pairing = streams.stream("pairing").permutation(batch_size)

    if mode == "per_patch_lambda":
        check_grid(height, width, aug.patch_grid)
        n = aug.patch_grid ** 2
        lambdas = streams.stream("patch_lambda").beta(alpha0, alpha0, size=(batch_size, n))
        return MixPlan(mode, pairing, lambdas.mean(axis=1), patch_grid=aug.patch_grid, patch_lambdas=lambdas)

    lam_raw = _sample_lambda0(aug, alpha0, streams)
    if mode == "mixup":
        return MixPlan(mode, pairing, np.full(batch_size, lam_raw))

    box, lam = sample_cutmix_box(height, width, lam_raw, streams.stream("box"))
    plan = MixPlan(mode, pairing, np.full(batch_size, lam), box=box)
    if mode == "cutmix_shuffle":
        check_grid(height, width, aug.shuffle_grid)
        shuffle = streams.stream("patch_shuffle")
        plan.shuffle_grid = aug.shuffle_grid
        plan.shuffle_orders = np.stack([shuffle.permutation(aug.shuffle_grid ** 2) for _ in range(batch_size)])
    return plan


def apply_mix_plan(images: np.ndarray, plan: MixPlan) -> np.ndarray:
    xa = np.asarray(images, dtype=np.float64)
    if plan.mode == "none":
        return xa.copy()
    xb = xa[plan.pairing]
    if plan.mode == "mixup":
        return apply_mixup(xa, xb, plan.lambda0)
    if plan.mode == "per_patch_lambda":
        return np.stack([mix_patches(xa[i], xb[i], plan.patch_grid, plan.patch_lambdas[i]) for i in range(len(xa))])
    mixed = apply_cutmix(xa, xb, plan.box)
    if plan.mode == "cutmix_shuffle":
        mixed = np.stack([permute_patches(mixed[i], plan.shuffle_grid, plan.shuffle_orders[i])
                          for i in range(len(mixed))])
    return mixed
