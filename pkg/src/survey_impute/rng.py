"""Seed derivation.

Every random draw in the package comes from a PCG64 generator built from a
``SeedSequence`` whose entropy is the user seed and whose spawn key names the
stream. Keys are tuples of small integers, so streams are reproducible across
platforms and never overlap between purposes or Monte Carlo replications.
"""

from __future__ import annotations

import numpy as np

# stream tags (first element of every spawn key)
POPULATION = 1
RESPONSE = 2
SIZE_NOISE = 3
SAMPLE = 4
SRI_RESIDUALS = 5
BOOTSTRAP = 6
REPLICATION = 7

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for stream ``key`` under ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse ``(seed, key)`` to a fresh 64-bit seed (a hash of both)."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
