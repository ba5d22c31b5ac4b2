"""Deterministic, splittable random number source.

Wraps numpy's Philox bit generator (a counter-based generator whose output
is identical across platforms) seeded through SeedSequence. Child streams
are derived from the root seed plus an explicit integer path, so the n-th
child of seed s is the same stream no matter how many siblings were made
before it and in what order.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError


class Rng:
    """A named stream of randomness with cheap independent children."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        if int(seed) < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def split(self, *path: int) -> "Rng":
        """Child stream at self.path + path. Independent of the parent's state."""
        return Rng(self.seed, self.path + path)

    # Draw helpers delegate to the generator; float64 output throughout.
    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size=size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"
