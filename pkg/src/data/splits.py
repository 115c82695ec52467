"""
splits.py
---------
Builds the (train, test) pair an experiment runs on from its DatasetConfig.

Synthetic splits come from independent named sub-streams of the run seed
("data_train", "data_test"), so they never share a draw.  IDX corpora read
``dataset.path`` for train and ``dataset.test_path`` for test; without a
test file the last ``n_test`` items of the train file are held out.
"""

from __future__ import annotations

from augment.sampling import RngStreams
from data.dataset import Dataset, DatasetConfig
from data.idx import load_idx
from data.synthetic import GLYPHS, CollageSpec, gen_blobs, gen_collage


def collage_spec(cfg: DatasetConfig) -> CollageSpec:
    return CollageSpec(canvas=cfg.canvas, object_frac=tuple(cfg.object_frac),
                       glyphs=GLYPHS[:cfg.num_classes], clutter=cfg.clutter,
                       background=cfg.background, placement=cfg.placement)


def _generate(cfg: DatasetConfig, n: int, streams: RngStreams, split: str) -> Dataset:
    rng = streams.fresh(f"data_{split}")
    if cfg.kind == "collage":
        return gen_collage(collage_spec(cfg), n, rng, split=split)
    return gen_blobs(cfg.num_classes, n, cfg.blob_dim, cfg.blob_separation, rng, split=split)


def load_splits(cfg: DatasetConfig, seed: int, verbose: bool = True) -> tuple[Dataset, Dataset]:
    cfg.validate()
    if cfg.kind == "idx":
        train = load_idx(cfg.path, num_classes=cfg.num_classes, split="train", verbose=verbose)
        if cfg.test_path:
            test = load_idx(cfg.test_path, num_classes=cfg.num_classes, split="test", verbose=verbose)
        else:
            n_test = min(cfg.n_test, len(train) - 1)
            cut = len(train) - n_test
            test = Dataset(train.images[cut:], train.labels[cut:], train.num_classes, "test", train.name)
            train = Dataset(train.images[:cut], train.labels[:cut], train.num_classes, "train", train.name)
        n = min(cfg.n_train, len(train))
        return (train.head(n) if n < len(train) else train), test

    streams = RngStreams(seed)
    train = _generate(cfg, cfg.n_train, streams, "train")
    test = _generate(cfg, max(cfg.n_test, 1), streams, "test")
    if verbose:
        print(f"[data] {cfg.kind}: train {len(train)} / test {len(test)}, shape {train.image_shape}, "
              f"classes {train.num_classes}")
    return train, test
