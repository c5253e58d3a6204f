"""Deterministic random-stream derivation.

Every stochastic quantity in the package draws from a Philox (counter-based)
generator keyed by an integer master seed plus an integer path.  Recreating a
stream from its key reproduces it bit-for-bit, independently of scheduling,
worker count, or call order, which is what makes the Monte Carlo harness
reproducible under parallel execution.
"""

from __future__ import annotations

import numpy as np

# Laplace with variance 1 has scale 1/sqrt(2): density (1/sqrt(2)) exp(-sqrt(2)|w|).
UNIT_LAPLACE_SCALE = 1.0 / np.sqrt(2.0)

SeedLike = "int | tuple[int, ...]"


def as_key(seed) -> tuple[int, ...]:
    """Normalize an int or tuple seed to a key tuple (master, *path)."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    key = tuple(int(p) for p in seed)
    if not key:
        raise ValueError("seed key must be non-empty")
    return key


def stream(seed, *path: int) -> np.random.Generator:
    """Philox generator for the substream identified by (seed, *path)."""
    key = as_key(seed) + tuple(int(p) for p in path)
    ss = np.random.SeedSequence(key[0], spawn_key=key[1:])
    return np.random.Generator(np.random.Philox(ss))


def laplace_unit(gen: np.random.Generator, size) -> np.ndarray:
    """Variance-1 Laplace draws via inverse CDF from the uniform stream."""
    return gen.laplace(scale=UNIT_LAPLACE_SCALE, size=size)
