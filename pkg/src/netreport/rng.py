"""Seeded random number generation.

Every random stream in the toolkit comes from :func:`make_rng`, so a run is
reproducible given the integer seed, the key path and :data:`RNG_ALGORITHM`.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence(entropy=seed, spawn_key=keys)"


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator for ``seed`` and an optional integer key path.

    Streams with different key paths are statistically independent, which lets
    replicate ``r`` of a batch use ``make_rng(seed, r)`` regardless of the order
    (or process) in which replicates are evaluated.
    """
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a child integer seed, e.g. for nested batch runs."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
