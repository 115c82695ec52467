from __future__ import annotations

import os

import numpy as np


def write_ppm(path: str, image: np.ndarray) -> None:
    """Binary PPM (P6) of a (C, H, W) image in [0, 1]; 1-channel images go grey."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    if img.shape[0] != 3:
        raise ValueError(f"write_ppm expects 1 or 3 channels, got {img.shape[0]}")
    _, h, w = img.shape
    pixels = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def dump_mixed(out_dir: str, mixed: np.ndarray, n: int, prefix: str = "mixed") -> list[str]:
    paths = []
    for i in range(min(n, len(mixed))):
        path = os.path.join(out_dir, f"{prefix}_{i:03d}.ppm")
        write_ppm(path, mixed[i])
        paths.append(path)
    return paths
