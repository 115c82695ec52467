"""
network.py
----------
Feed-forward classifier built from the layers in ``layers.py``.

Reference architectures
-----------------------
  mlp   flatten → dense(in→256) → relu → dense(256→128) → relu → dense(128→C)
        (3072→256→128→C for 3×32×32 inputs)
  conv  conv3x3(c→8) → relu → pool2 → conv3x3(8→16) → relu → pool2
        → flatten → dense(→64) → relu → dense(64→C)

Usage
-----
    model = build_model("conv", (1, 32, 32), num_classes=4, rng=streams.stream("init"))
    logits = model.forward(images)
    model.backward(loss.logits_grad)
"""

from __future__ import annotations

import numpy as np
import yaml

from common.errors import ShapeError
from model.layers import Conv2d, Dense, Flatten, Layer, MaxPool2d, ReLU

ARCHITECTURES = ("mlp", "conv")


class Model:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], num_classes: int, arch: str = "custom"):
        self.layers = layers
        self.input_shape = tuple(int(d) for d in input_shape)
        self.num_classes = int(num_classes)
        self.arch = arch
        self.build_kwargs: dict = {}

    # ── passes ───────────────────────────────────────────────────────────────

    def forward(self, batch: np.ndarray) -> np.ndarray:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(f"model expects (B, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, logits_grad: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns d(loss)/d(input)."""
        g = np.asarray(logits_grad, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(images[i:i + batch_size]).argmax(axis=1) for i in range(0, len(images), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    # ── parameters ───────────────────────────────────────────────────────────

    def parameters(self):
        """Yields (key, param, grad) with keys like ``"3.W"``."""
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield f"{i}.{name}", p, layer.grads[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.copy() for k, p, _ in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p, _ in self.parameters():
            if k not in state or state[k].shape != p.shape:
                raise ShapeError(f"state entry {k!r} missing or mis-shaped")
            p[...] = state[k]

    def save(self, path: str) -> None:
        meta = np.array([self.arch, ",".join(map(str, self.input_shape)), str(self.num_classes),
                         yaml.safe_dump(self.build_kwargs)])
        np.savez(path, __meta__=meta, **self.state_dict())

    def summary(self) -> str:
        n = sum(p.size for _, p, _ in self.parameters())
        return f"{self.arch}: " + " | ".join(l.describe() for l in self.layers if l.kind != "relu") + f"  ({n} params)"


def build_mlp(input_shape, num_classes: int, rng=None, hidden=(256, 128)) -> Model:
    dims = [int(np.prod(input_shape)), *hidden]
    layers: list[Layer] = [Flatten()]
    for a, b in zip(dims[:-1], dims[1:]):
        layers += [Dense(a, b, rng), ReLU()]
    layers.append(Dense(dims[-1], num_classes, rng))
    return Model(layers, input_shape, num_classes, arch="mlp")


def build_convnet(input_shape, num_classes: int, rng=None, channels=(8, 16), hidden: int = 64) -> Model:
    c, h, w = input_shape
    if h % 4 or w % 4:
        raise ShapeError(f"conv net needs spatial dims divisible by 4, got {h}x{w}")
    c1, c2 = channels
    layers: list[Layer] = [
        Conv2d(c, c1, 3, rng), ReLU(), MaxPool2d(),
        Conv2d(c1, c2, 3, rng), ReLU(), MaxPool2d(),
        Flatten(),
        Dense(c2 * (h // 4) * (w // 4), hidden, rng), ReLU(),
        Dense(hidden, num_classes, rng),
    ]
    return Model(layers, input_shape, num_classes, arch="conv")


def build_model(arch: str, input_shape, num_classes: int, rng=None, hidden=(256, 128),
                conv_channels=(8, 16), conv_hidden: int = 64) -> Model:
    if arch == "mlp":
        model = build_mlp(input_shape, num_classes, rng, hidden=tuple(hidden))
        model.build_kwargs = {"hidden": [int(h) for h in hidden]}
    elif arch == "conv":
        model = build_convnet(input_shape, num_classes, rng, channels=tuple(conv_channels), hidden=conv_hidden)
        model.build_kwargs = {"conv_channels": [int(c) for c in conv_channels], "conv_hidden": int(conv_hidden)}
    else:
        raise ValueError(f"Unknown architecture: {arch}")
    return model


def load_model(path: str) -> Model:
    with np.load(path) as f:
        arch, shape, n_cls, kwargs = (str(s) for s in f["__meta__"])
        state = {k: f[k] for k in f.files if k != "__meta__"}
    model = build_model(arch, tuple(int(d) for d in shape.split(",")), int(n_cls), rng=None, **yaml.safe_load(kwargs))
    model.load_state_dict(state)
    return model
