"""Splittable random streams for reproducible parallel Monte Carlo.

Every stochastic component draws from a stream keyed by ``(seed, *key)``,
so any single replication can be re-run in isolation and reproduces its
draws bit-exactly, regardless of execution order or worker count.
"""

from __future__ import annotations

import numpy as np

# Stream roles within one replication.
DESIGN = 0
NOISE = 1
SKETCH = 2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for the given seed and integer key path."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def float_key(x: float) -> int:
    """Stable non-negative integer key for a float value (for value-keyed streams)."""
    return int(np.float64(x).view(np.uint64))
