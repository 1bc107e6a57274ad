"""Seeding conventions.

Every stochastic entry point accepts a ``seed`` that is either an int, a
``numpy.random.SeedSequence``, or an already-constructed ``Generator``.
Derived streams (pipeline stages, per-cell sampling) are spawned with
``derive``: the child entropy is ``[root, code0, code1, ...]``, so the stream
for a given stage is a pure function of the root seed and the stage codes and
never depends on execution order.
"""

from __future__ import annotations

import numpy as np


def as_generator(seed) -> np.random.Generator:
    """Return a ``Generator`` for ``seed`` (ints and SeedSequences are wrapped)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def derive(root: int, *codes: int) -> np.random.SeedSequence:
    """Deterministic child seed for stage ``codes`` under ``root``."""
    return np.random.SeedSequence(entropy=[int(root), *map(int, codes)])
