"""Deterministic seeding for replicas.

Each replica gets its own PCG64 generator, seeded with a SplitMix64
avalanche of ``(master_seed, replica)`` so that neighbouring replica
indices produce unrelated streams.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (state is advanced by the golden gamma first)."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replica_seed(master_seed: int, replica: int, stream: int = 0) -> int:
    """64-bit seed for ``replica`` of ``master_seed``.

    ``stream`` separates auxiliary streams of the same replica (e.g. renewal
    spacings) from the main box-filling stream.
    """
    if master_seed < 0 or replica < 0 or stream < 0:
        raise ValueError("seeds and indices must be non-negative")
    h = splitmix64(master_seed & MASK64)
    h = splitmix64(h ^ (replica & MASK64))
    return splitmix64(h ^ (stream & MASK64))


def make_rng(master_seed: int, replica: int = 0, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(replica_seed(master_seed, replica, stream)))
