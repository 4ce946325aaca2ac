"""Per-(node, purpose) random streams derived from one run seed.

Streams are counter-based (Philox) and independent, so adding a node or a
new consumer never shifts the draws seen by another one.
"""

from __future__ import annotations

import math

import numpy as np

PURPOSES = ("traffic", "explore", "backoff", "handshake", "misc")
_BLOCK = 512


class Stream:
    __slots__ = ("_gen", "_buf", "_pos")

    def __init__(self, seed: int, node: int, purpose: str):
        code = PURPOSES.index(purpose)
        ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, node + 1, code])
        self._gen = np.random.Generator(np.random.Philox(ss))
        self._buf = self._gen.random(_BLOCK).tolist()
        self._pos = 0

    def random(self) -> float:
        if self._pos == _BLOCK:
            self._buf = self._gen.random(_BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return min(int(self.random() * n), n - 1)

    def exponential(self, mean: float) -> float:
        return -math.log1p(-self.random()) * mean


class StreamFactory:
    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed
        self._cache: dict[tuple[int, str], Stream] = {}

    def get(self, node: int, purpose: str) -> Stream:
        key = (node, purpose)
        s = self._cache.get(key)
        if s is None:
            s = self._cache[key] = Stream(self.seed, node, purpose)
        return s
