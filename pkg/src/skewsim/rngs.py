"""Deterministic counter-based random streams.

Every stochastic routine draws from a Philox generator keyed by the user seed
plus a structural key (driver id, replica index, epoch), so replicas and
drivers are independent, reproducible bit-for-bit, and safe to generate in
any order or in parallel.
"""

from __future__ import annotations

import numpy as np

GAUSS_CATALYST = 1
GAUSS_ENTRANCE = 2
JUMP_ENTRANCE = 3
JUMP_CATALYST = 4
PARTICLES = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed; key...), e.g. (seed, driver, replica)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
