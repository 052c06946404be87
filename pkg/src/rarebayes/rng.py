"""Keyed random sub-streams.

Every consumer of randomness asks for a generator by a tuple of integer keys
(level, role, chain index, ...). The generator is derived from the master seed
and the key alone, so results do not depend on how work is split across
threads or in which order streams are requested.
"""

from __future__ import annotations

import numpy as np

# top-level namespaces
OUTER = 0
INNER = 1
ORACLE = 2
AUX = 3

# roles inside one SuS level
LEVEL_SAMPLE = 0
LEVEL_SHUFFLE = 1
LEVEL_CHAIN = 2


class Streams:
    """Factory of independent generators keyed by integer tuples."""

    def __init__(self, master_seed: int, namespace: tuple[int, ...] = ()):
        if master_seed < 0:
            raise ValueError("master seed must be non-negative")
        self.master_seed = int(master_seed)
        self.namespace = tuple(int(k) for k in namespace)

    def child(self, *key: int) -> "Streams":
        return Streams(self.master_seed, self.namespace + tuple(int(k) for k in key))

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.namespace + tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"Streams(master_seed={self.master_seed}, namespace={self.namespace})"


def as_streams(rng) -> Streams:
    """Accept a Streams, an int seed, or None (seed 0)."""
    if isinstance(rng, Streams):
        return rng
    if rng is None:
        return Streams(0)
    if isinstance(rng, (int, np.integer)):
        return Streams(int(rng))
    raise TypeError(f"expected Streams or int seed, got {type(rng).__name__}")
