"""
synthetic.py
------------
Synthetic classification datasets.

collage
    One class-defining glyph (bar / cross / disc / ring) pasted at a random
    position over structured background clutter.  The glyph covers a random
    fraction of the canvas (default 10–40 %), so a CutMix crop often misses
    it entirely and the area-based label weight is wrong.  The clutter
    family and the glyph placement are CollageSpec fields.
blobs
    Gaussian clusters whose class means sit on a scaled simplex (every pair
    of means is ``separation`` apart), laid out as 1×1×dim "images".

Usage
-----
    PYTHONPATH=src python -m data.synthetic --kind collage --n 16 --seed 0
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from augment.sampling import RngStream
from common.errors import ConfigError
from data.dataset import COLLAGE_BACKGROUNDS as BACKGROUNDS
from data.dataset import COLLAGE_PLACEMENTS as PLACEMENTS
from data.dataset import Dataset

GLYPHS = ("bar", "cross", "disc", "ring")
GLYPH_INTENSITY = 0.95


@dataclass(frozen=True)
class CollageSpec:
    canvas: int = 32
    object_frac: tuple[float, float] = (0.1, 0.4)
    glyphs: tuple[str, ...] = GLYPHS
    clutter: float = 0.35
    background: str = "gratings"
    placement: str = "uniform"

    def validate(self) -> None:
        lo, hi = self.object_frac
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"object_frac must satisfy 0 < lo <= hi <= 1, got {self.object_frac}")
        if len(self.glyphs) < 2 or any(g not in GLYPHS for g in self.glyphs):
            raise ConfigError(f"need at least 2 glyphs from {GLYPHS}, got {self.glyphs}")
        if self.canvas < 4:
            raise ConfigError("canvas must be >= 4 pixels")
        if self.background not in BACKGROUNDS:
            raise ConfigError(f"background must be one of {BACKGROUNDS}, got {self.background!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")


# ── Glyph rendering ───────────────────────────────────────────────────────────

def glyph_mask(kind: str, side: int, angle: float = 0.0) -> np.ndarray:
    """Boolean side×side mask of a glyph drawn in local coords u, v ∈ [-1, 1]."""
    t = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    v, u = np.meshgrid(t, t, indexing="ij")
    r = np.hypot(u, v)
    if kind == "bar":
        along = np.cos(angle) * u + np.sin(angle) * v
        across = -np.sin(angle) * u + np.cos(angle) * v
        return (np.abs(across) < 0.22) & (np.abs(along) < 0.95)
    if kind == "cross":
        return ((np.abs(u) < 0.2) & (np.abs(v) < 0.9)) | ((np.abs(v) < 0.2) & (np.abs(u) < 0.9))
    if kind == "disc":
        return r < 0.9
    if kind == "ring":
        return (r > 0.55) & (r < 0.9)
    raise ValueError(f"Unknown glyph: {kind}")


def _background(canvas: int, clutter: float, family: str, rng: RngStream) -> np.ndarray:
    """Mid-grey canvas with clutter of the given family plus fine pixel noise.

    gratings  two random sinusoidal gratings
    blocks    a 4×4 grid of random grey levels, stretched over the canvas
    flat      pixel noise only
    """
    y, x = np.mgrid[0:canvas, 0:canvas] / canvas
    img = np.full((canvas, canvas), 0.3)
    if family == "gratings":
        for _ in range(2):
            fx, fy = rng.uniform(2) * 4.0 + 1.0
            phase = rng.uniform() * 2.0 * np.pi
            img += 0.5 * clutter * np.sin(2.0 * np.pi * (fx * x + fy * y) + phase)
    elif family == "blocks":
        coarse = rng.uniform((4, 4)) - 0.5
        cell = (np.arange(canvas) * 4) // canvas
        img += clutter * coarse[np.ix_(cell, cell)]
    img += 0.1 * (rng.uniform((canvas, canvas)) - 0.5)
    return img


def gen_collage(spec: CollageSpec, n: int, rng: RngStream, split: str = "train") -> Dataset:
    spec.validate()
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    c = spec.canvas
    lo, hi = spec.object_frac
    images = np.empty((n, 1, c, c))
    labels = rng.integers(0, len(spec.glyphs), size=n).astype(np.int64)
    for i in range(n):
        img = _background(c, spec.clutter, spec.background, rng)
        frac = lo + (hi - lo) * rng.uniform()
        side = int(min(c, max(2, np.floor(c * np.sqrt(frac) + 0.5))))
        if spec.placement == "center":
            x0 = y0 = (c - side) // 2
        else:
            x0 = int(rng.integers(0, c - side + 1))
            y0 = int(rng.integers(0, c - side + 1))
        angle = rng.uniform() * np.pi
        mask = glyph_mask(spec.glyphs[labels[i]], side, angle)
        patch = img[y0:y0 + side, x0:x0 + side]
        patch[mask] = GLYPH_INTENSITY
        images[i, 0] = np.clip(img, 0.0, 1.0)
    return Dataset(images, labels, len(spec.glyphs), split=split, name="collage")


def gen_blobs(num_classes: int, n: int, dim: int, separation: float, rng: RngStream,
              split: str = "train") -> Dataset:
    if num_classes < 2:
        raise ConfigError("gen_blobs needs num_classes >= 2")
    if dim < num_classes:
        raise ConfigError(f"gen_blobs needs dim >= num_classes ({dim} < {num_classes})")
    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes)] = separation / np.sqrt(2.0)
    labels = rng.integers(0, num_classes, size=n).astype(np.int64)
    x = means[labels] + rng.standard_normal((n, dim))
    return Dataset(x.reshape(n, 1, 1, dim), labels, num_classes, split=split, name="blobs")


# ── Main ──────────────────────────────────────────────────────────────────────

def main():
    parser = argparse.ArgumentParser(description="Preview a synthetic dataset")
    parser.add_argument("--kind", choices=["collage", "blobs"], default="collage")
    parser.add_argument("--n", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = RngStream.from_seed(args.seed, name="preview")
    if args.kind == "collage":
        ds = gen_collage(CollageSpec(), args.n, rng)
    else:
        ds = gen_blobs(4, args.n, 16, 10.0, rng)

    print(f"[synthetic] {ds.name}: {len(ds)} items, shape {ds.image_shape}, classes {ds.class_counts().tolist()}")
    print(f"[synthetic] pixel range [{ds.images.min():.3f}, {ds.images.max():.3f}]  sha256 {ds.fingerprint()[:16]}")


if __name__ == "__main__":
    main()
