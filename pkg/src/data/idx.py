"""
idx.py
------
Reader/writer for the IDX container used by MNIST-style corpora.

Format (big endian)
-------------------
    [0]   u8   0
    [1]   u8   0
    [2]   u8   dtype code   0x08 u8 | 0x09 i8 | 0x0B i16 | 0x0C i32 | 0x0D f32 | 0x0E f64
    [3]   u8   ndim
    [4..] u32  ndim dimension sizes
    data       prod(dims) items, row-major

Files ending in ``.gz`` are read and written through gzip.  Loaded pixels
are scaled to [0, 1]: integer types by their maximum, floats must already
lie in that range.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

from common.errors import BadMagicError, DimMismatchError, MissingFileError, PixelRangeError, TruncatedError
from data.dataset import Dataset

IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IDX_CODES = {dt.newbyteorder("=").kind + str(dt.itemsize): code for code, dt in IDX_DTYPES.items()}


def _open(path: str, mode: str):
    try:
        return gzip.open(path, mode) if path.endswith(".gz") else open(path, mode)
    except FileNotFoundError:
        raise MissingFileError(f"{path}: no such IDX file") from None


def read_idx(path: str) -> np.ndarray:
    with _open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise TruncatedError(f"{path}: truncated header ({len(raw)} bytes)")
    zero0, zero1, code, ndim = raw[0], raw[1], raw[2], raw[3]
    if zero0 != 0 or zero1 != 0 or code not in IDX_DTYPES or ndim == 0:
        raise BadMagicError(f"{path}: bad magic bytes {raw[:4].hex()}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedError(f"{path}: truncated header, expected {ndim} dims")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    dtype = IDX_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    body = len(raw) - header_len
    if body < expected:
        raise TruncatedError(f"{path}: truncated data, {body} of {expected} bytes")
    if body > expected:
        raise DimMismatchError(f"{path}: {body - expected} trailing bytes beyond dims {dims}")
    return np.frombuffer(raw, dtype=dtype, offset=header_len).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path: str, array: np.ndarray) -> None:
    arr = np.asarray(array)
    key = arr.dtype.kind + str(arr.dtype.itemsize)
    if key not in IDX_CODES:
        raise BadMagicError(f"{path}: dtype {arr.dtype} has no IDX code")
    code = IDX_CODES[key]
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with _open(path, "wb") as f:
        f.write(bytes([0, 0, code, arr.ndim]))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype=IDX_DTYPES[code]).tobytes())


def labels_path_for(images_path: str) -> str:
    """MNIST naming: ``*-images-idx3-ubyte`` ↔ ``*-labels-idx1-ubyte``."""
    for a, b in (("images-idx3", "labels-idx1"), ("images", "labels")):
        if a in os.path.basename(images_path):
            head, tail = os.path.split(images_path)
            return os.path.join(head, tail.replace(a, b, 1))
    raise MissingFileError(f"cannot infer a labels file for {images_path}")


def scale_pixels(values: np.ndarray, path: str = "<array>") -> np.ndarray:
    """Integer pixels divided by their type's maximum; float pixels checked against [0, 1]."""
    if values.dtype.kind in "ui":
        if values.size and values.min() < 0:
            raise PixelRangeError(f"{path}: negative pixel value {int(values.min())}")
        return values.astype(np.float64) / float(np.iinfo(values.dtype).max)
    pixels = values.astype(np.float64)
    if pixels.size and not (np.all(np.isfinite(pixels)) and pixels.min() >= 0.0 and pixels.max() <= 1.0):
        raise PixelRangeError(f"{path}: float pixels must lie in [0, 1], "
                              f"got [{np.nanmin(pixels):.4g}, {np.nanmax(pixels):.4g}]")
    return pixels


def load_idx(path: str, labels_path: str | None = None, num_classes: int | None = None,
             split: str = "train", verbose: bool = True) -> Dataset:
    images = read_idx(path)
    labels = read_idx(labels_path or labels_path_for(path))
    if images.ndim == 3:
        images = images[:, None, :, :]
    if images.ndim != 4:
        raise DimMismatchError(f"{path}: expected 3 or 4 image dims, got {images.ndim}")
    if labels.ndim != 1 or len(labels) != len(images):
        raise DimMismatchError(f"{path}: {len(images)} images vs labels of shape {labels.shape}")
    pixels = scale_pixels(images, path)
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = max(int(labels.max()) + 1 if len(labels) else 2, 2)
    if verbose:
        print(f"[idx] {os.path.basename(path)}: {len(images)} items of {'x'.join(map(str, images.shape[1:]))}")
    return Dataset(pixels, labels, num_classes, split=split, name=os.path.basename(path))


def save_dataset(dataset: Dataset, images_path: str, labels_path: str | None = None) -> tuple[str, str]:
    labels_path = labels_path or labels_path_for(images_path)
    images = np.asarray(dataset.images, dtype=np.float64)
    scale_pixels(images, images_path)
    write_idx(images_path, images)
    write_idx(labels_path, np.asarray(dataset.labels, dtype=np.uint8))
    return images_path, labels_path
