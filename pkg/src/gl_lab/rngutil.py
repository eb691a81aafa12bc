"""Reproducible stream derivation for parallel Monte Carlo.

All randomness in the package flows through numpy Generators created by
`rng_for(master_seed, *path)`.  The path is a tuple of small integers that
identifies the consumer (experiment stage, replica index, chain group, ...),
so replica k always sees the same stream for a given master seed no matter
how the work is scheduled.
"""

from __future__ import annotations

import numpy as np

# Purpose codes used as the first path component.  Keeping them in one place
# guarantees two subsystems never collide on a stream.
CHAIN = 1
WALK = 2
FIELD_INIT = 3
EXPERIMENT = 4
TORUS = 5
BEURLING = 6


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Derive an independent Generator from (seed, path).

    Pure function of its arguments: rng_for(s, a, b) is the same stream on
    every platform and run.
    """
    if not (0 <= int(seed) < 2**64):
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)
