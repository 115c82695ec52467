"""
optim.py
--------
SGD with classical momentum and L2 weight decay,
plus the desk-scale learning-rate schedule (linear warmup, then constant).

Update rule (per parameter θ with gradient g)
---------------------------------------------
    g' = g + weight_decay · θ
    v  = momentum · v + g'
    θ  = θ − lr · v
"""

from __future__ import annotations

import numpy as np

from model.network import Model


class SGD:
    def __init__(self, model: Model, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.model = model
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity: dict[str, np.ndarray] = {k: np.zeros_like(p) for k, p, _ in model.parameters()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for key, p, g in self.model.parameters():
            v = self._velocity[key]
            v *= self.momentum
            v += g
            if self.weight_decay:
                v += self.weight_decay * p
            p -= lr * v

    def zero_grad(self) -> None:
        self.model.zero_grad()


def sgd_step(model: Model, optimizer: SGD, lr: float) -> None:
    """One momentum step followed by clearing the accumulated gradients."""
    optimizer.step(lr)
    model.zero_grad()


class WarmupSchedule:
    """Linear warmup from lr/warmup_steps up to lr, constant afterwards."""

    def __init__(self, base_lr: float, warmup_steps: int = 0):
        self.base_lr = base_lr
        self.warmup_steps = max(int(warmup_steps), 0)

    def step(self, step_idx: int) -> float:
        if self.warmup_steps and step_idx < self.warmup_steps:
            return self.base_lr * (step_idx + 1) / self.warmup_steps
        return self.base_lr
