"""Deterministic random streams.

Each run owns a single counter-based Philox generator and consumes it as one
flat stream of uniforms in a fixed, documented order: for every transition,
first the policy draw, then the environment draws.  Exponential variates are
derived from uniforms by inversion (-log1p(-u)/rate) instead of numpy's
ziggurat sampler, which consumes a variable number of raw draws and would make
the stream layout fragile under refactoring.  A run is therefore reproducible,
bit for bit, from its seed alone.
"""

from __future__ import annotations

import math

import numpy as np

_BLOCK = 8192


class UniformStream:
    """Buffered uniform(0,1) variates from a seeded Philox generator."""

    __slots__ = ("_gen", "_buf", "_pos")

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.Philox(seed))
        self._buf = self._gen.random(_BLOCK).tolist()
        self._pos = 0

    def uniform(self) -> float:
        """Next uniform(0,1) variate (never returns 1.0)."""
        pos = self._pos
        if pos == _BLOCK:
            self._buf = self._gen.random(_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def exponential(self, rate: float) -> float:
        """Exponential variate with the given rate, by inversion."""
        pos = self._pos
        if pos == _BLOCK:
            self._buf = self._gen.random(_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return -math.log1p(-self._buf[pos]) / rate
