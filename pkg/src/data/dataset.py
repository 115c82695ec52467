from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from common.errors import ConfigError, LabelError, ShapeError

DATASET_KINDS = ("collage", "blobs", "idx")
COLLAGE_BACKGROUNDS = ("gratings", "blocks", "flat")
COLLAGE_PLACEMENTS = ("uniform", "center")


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray          # (N, C, H, W) float64
    labels: np.ndarray          # (N,) int64
    num_classes: int
    split: str = "train"
    name: str = ""

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ShapeError(f"dataset images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelError(f"labels outside [0, {self.num_classes})")
        self.images.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()

    def head(self, n: int) -> "Dataset":
        return Dataset(self.images[:n].copy(), self.labels[:n].copy(), self.num_classes, self.split, self.name)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class DatasetConfig:
    kind: str = "collage"
    path: str | None = None
    test_path: str | None = None
    n_train: int = 10000
    n_test: int = 2000
    num_classes: int = 4
    canvas: int = 32
    object_frac: list[float] = field(default_factory=lambda: [0.1, 0.4])
    clutter: float = 0.35
    background: str = "gratings"
    placement: str = "uniform"
    blob_dim: int = 16
    blob_separation: float = 10.0

    def validate(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "idx" and not self.path:
            raise ConfigError("dataset.kind=idx needs dataset.path")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("dataset.n_train must be >= 1 and dataset.n_test >= 0")
        if self.num_classes < 2:
            raise ConfigError("dataset.num_classes must be >= 2")
        lo, hi = self.object_frac
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"dataset.object_frac must satisfy 0 < lo <= hi <= 1, got {self.object_frac}")
        if self.canvas < 4:
            raise ConfigError("dataset.canvas must be >= 4")
        if self.kind == "collage" and self.num_classes > 4:
            raise ConfigError("collage has 4 glyph classes; dataset.num_classes must be <= 4")
        if self.background not in COLLAGE_BACKGROUNDS:
            raise ConfigError(f"dataset.background must be one of {COLLAGE_BACKGROUNDS}, got {self.background!r}")
        if self.placement not in COLLAGE_PLACEMENTS:
            raise ConfigError(f"dataset.placement must be one of {COLLAGE_PLACEMENTS}, got {self.placement!r}")
        if self.kind == "blobs" and self.blob_dim < self.num_classes:
            raise ConfigError("dataset.blob_dim must be >= dataset.num_classes")
