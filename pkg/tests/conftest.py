from pathlib import Path

import numpy as np
import pytest

from experiment.config import load_config

ROOT = Path(__file__).resolve().parents[1]
BASE_YAML = ROOT / "src" / "config" / "base.yaml"
SWEEPS_DIR = ROOT / "src" / "config" / "sweeps"

# Small, well-separated Gaussian clusters: trains to near-perfect accuracy in seconds.
TINY_BLOBS = [
    "dataset.kind=blobs",
    "dataset.n_train=600",
    "dataset.n_test=200",
    "model.arch=mlp",
    "model.hidden=[32]",
    "optim.epochs=3",
    "optim.batch_size=32",
    "optim.lr=0.02",
]


@pytest.fixture
def tiny_cfg():
    def make(*overrides):
        return load_config(str(BASE_YAML), TINY_BLOBS + list(overrides))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at every entry of x (x is perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad
