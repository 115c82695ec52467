"""
sampling.py
-----------
Seeded random streams and the distribution samplers the mixing code needs.

Generator
---------
  Every stream is numpy's PCG64 bit generator (PCG XSL RR 128/64, the
  numpy default).  A root seed is split into named sub-streams:

      child = SeedSequence([root_seed, sha256(name)[:8] as big-endian u64])

  so adding draws to one purpose (e.g. "lambda_r") never shifts the
  sequence seen by another (e.g. "box").

Samplers
--------
  uniform    : Generator.random, [0, 1)
  gaussian   : mu + sigma * Generator.standard_normal (ziggurat)
  gamma      : Marsaglia & Tsang squeeze/rejection for shape >= 1,
               boosted as Gamma(a+1) * U^(1/a) for shape < 1
  beta       : X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b)
  permutation: Fisher–Yates, i = n-1 .. 1, j = integers(0, i+1), swap(i, j)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from common.errors import ConfigError

U64_MAX = 2**64 - 1


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


class RngStream:
    """One named, single-owner random stream."""

    def __init__(self, seed_seq: np.random.SeedSequence, name: str = ""):
        self.name = name
        self._gen = np.random.Generator(np.random.PCG64(seed_seq))

    @classmethod
    def from_seed(cls, seed: int, name: str = "") -> "RngStream":
        return cls(np.random.SeedSequence(seed), name=name)

    # ── primitive draws ──────────────────────────────────────────────────────

    def uniform(self, size=None):
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def gaussian(self, mu: float, sigma: float, size=None):
        if sigma < 0:
            raise ConfigError(f"gaussian sigma must be >= 0, got {sigma}")
        return mu + sigma * self._gen.standard_normal(size)

    # ── Gamma / Beta ─────────────────────────────────────────────────────────

    def _gamma_mt(self, shape: float, n: int) -> np.ndarray:
        """Marsaglia–Tsang for shape >= 1, vectorised over pending draws."""
        d = shape - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(n)
        pending = np.arange(n)
        while pending.size:
            m = pending.size
            x = self._gen.standard_normal(m)
            v = 1.0 + c * x
            u = self._gen.random(m)
            ok = v > 0
            v3 = np.where(ok, v, 1.0) ** 3
            squeeze = u < 1.0 - 0.0331 * x**4
            with np.errstate(divide="ignore", invalid="ignore"):
                full = np.log(u) < 0.5 * x**2 + d * (1.0 - v3 + np.log(v3))
            accept = ok & (squeeze | full)
            out[pending[accept]] = d * v3[accept]
            pending = pending[~accept]
        return out

    def gamma(self, shape: float, size=None):
        if not shape > 0:
            raise ConfigError(f"gamma shape must be > 0, got {shape}")
        n = 1 if size is None else int(np.prod(size))
        if shape >= 1.0:
            draws = self._gamma_mt(shape, n)
        else:
            draws = self._gamma_mt(shape + 1.0, n)
            draws *= self._gen.random(n) ** (1.0 / shape)
        return float(draws[0]) if size is None else draws.reshape(size)

    def beta(self, alpha: float, beta: float, size=None):
        if not (alpha > 0 and beta > 0):
            raise ConfigError(f"beta shapes must be > 0, got ({alpha}, {beta})")
        n = 1 if size is None else int(np.prod(size))
        x = np.atleast_1d(self.gamma(alpha, n))
        y = np.atleast_1d(self.gamma(beta, n))
        total = x + y
        degenerate = total <= 0.0
        # Both gammas underflowed (tiny shapes): fall back to the Bernoulli limit.
        if degenerate.any():
            coin = self._gen.random(int(degenerate.sum())) < alpha / (alpha + beta)
            x = x.copy()
            x[degenerate] = coin.astype(float)
            total = np.where(degenerate, 1.0, total)
        draws = np.clip(x / total, 0.0, 1.0)
        return float(draws[0]) if size is None else draws.reshape(size)

    # ── permutations ─────────────────────────────────────────────────────────

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n) by Fisher–Yates (see module docstring)."""
        order = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = int(self._gen.integers(0, i + 1))
            order[i], order[j] = order[j], order[i]
        return order

    def choice_bool(self, p: float) -> bool:
        return bool(self._gen.random() < p)


@dataclass
class RngStreams:
    """Deterministic named child streams derived from one root seed."""

    root_seed: int
    _streams: dict[str, RngStream] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.root_seed, (int, np.integer)) or not 0 <= self.root_seed <= U64_MAX:
            raise ConfigError(f"seed must be an integer in [0, 2^64), got {self.root_seed!r}")
        self.root_seed = int(self.root_seed)

    def seed_sequence(self, name: str) -> np.random.SeedSequence:
        if not name:
            raise ValueError("stream name must be non-empty")
        return np.random.SeedSequence([self.root_seed, _name_key(name)])

    def stream(self, name: str) -> RngStream:
        """Persistent stream for a named purpose (created on first use)."""
        if name not in self._streams:
            self._streams[name] = RngStream(self.seed_sequence(name), name=name)
        return self._streams[name]

    def fresh(self, name: str) -> RngStream:
        """A new stream at the start of ``name``'s sequence, not cached."""
        return RngStream(self.seed_sequence(name), name=name)

    def reset(self) -> None:
        self._streams.clear()


# ── Module-level samplers ─────────────────────────────────────────────────────

def sample_uniform(rng: RngStream) -> float:
    return float(rng.uniform())


def sample_beta(alpha: float, beta: float, rng: RngStream) -> float:
    return rng.beta(alpha, beta)


def sample_gaussian(mu: float, sigma: float, rng: RngStream) -> float:
    return float(rng.gaussian(mu, sigma))
