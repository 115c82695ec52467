"""
layers.py
---------
Dense-tensor layers with hand-written forward/backward passes.

Every array is float64.  ``forward`` caches what ``backward`` needs;
``backward`` accumulates (+=) parameter gradients into ``self.grads`` and
returns the gradient w.r.t. the layer input.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from common.errors import ShapeError


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _init_grads(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def describe(self) -> str:
        return self.kind


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, rng=None):
        super().__init__()
        # He initialisation for ReLU stacks
        scale = np.sqrt(2.0 / in_dim)
        w = rng.standard_normal((in_dim, out_dim)) * scale if rng is not None else np.zeros((in_dim, out_dim))
        self.params = {"W": np.asarray(w, dtype=np.float64), "b": np.zeros(out_dim)}
        self._init_grads()
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.params["W"].shape[0]:
            raise ShapeError(f"dense expects (B, {self.params['W'].shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._x
        self.grads["W"] += x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T

    def describe(self) -> str:
        i, o = self.params["W"].shape
        return f"dense {i}→{o}"


class Conv2d(Layer):
    """k×k convolution, stride 1, zero padding k//2 (same-size output)."""

    kind = "conv"

    def __init__(self, in_ch: int, out_ch: int, k: int = 3, rng=None):
        super().__init__()
        scale = np.sqrt(2.0 / (in_ch * k * k))
        shape = (out_ch, in_ch, k, k)
        w = rng.standard_normal(shape) * scale if rng is not None else np.zeros(shape)
        self.params = {"W": np.asarray(w, dtype=np.float64), "b": np.zeros(out_ch)}
        self._init_grads()
        self.k = k
        self.pad = k // 2
        self._cols: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        out_ch, in_ch, k, _ = self.params["W"].shape
        if x.ndim != 4 or x.shape[1] != in_ch:
            raise ShapeError(f"conv expects (B, {in_ch}, H, W), got {x.shape}")
        b, _, h, w = x.shape
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        # (B, C, H, W, k, k) → rows of (C·k·k) per output pixel
        win = sliding_window_view(xp, (k, k), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, in_ch * k * k)
        self._cols = cols
        self._in_shape = x.shape
        out = cols @ self.params["W"].reshape(out_ch, -1).T + self.params["b"]
        return out.reshape(b, h, w, out_ch).transpose(0, 3, 1, 2)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        out_ch, in_ch, k, _ = self.params["W"].shape
        b, _, h, w = self._in_shape
        d = dout.transpose(0, 2, 3, 1).reshape(b * h * w, out_ch)
        self.grads["W"] += (d.T @ self._cols).reshape(self.params["W"].shape)
        self.grads["b"] += d.sum(axis=0)
        dcols = (d @ self.params["W"].reshape(out_ch, -1)).reshape(b, h, w, in_ch, k, k)
        p = self.pad
        dxp = np.zeros((b, in_ch, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]

    def describe(self) -> str:
        o, i, k, _ = self.params["W"].shape
        return f"conv{k}x{k} {i}→{o}"


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        super().__init__()
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._mask


class MaxPool2d(Layer):
    """2×2 max pooling, stride 2.  Ties route the gradient to the first max."""

    kind = "maxpool"

    def __init__(self):
        super().__init__()
        self._arg: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool needs even spatial dims, got {h}x{w}")
        blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
        self._arg = blocks.argmax(axis=-1)
        self._in_shape = x.shape
        return np.take_along_axis(blocks, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        b, c, h, w = self._in_shape
        blocks = np.zeros((b, c, h // 2, w // 2, 4))
        np.put_along_axis(blocks, self._arg[..., None], dout[..., None], axis=-1)
        return blocks.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        super().__init__()
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout.reshape(self._in_shape)
