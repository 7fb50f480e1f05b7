"""Seed-derived random generator streams.

Every sampler in this package takes an explicit ``numpy.random.Generator``.
Independent substreams for parallel work are derived by feeding an integer
key path into ``SeedSequence``, so the stream consumed by a unit of work
depends only on its key, never on scheduling order. Serial and parallel
executions that derive the same keys therefore produce identical results.
"""

import numpy as np


def make_rng(seed):
    """Root generator for a run."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def substream(seed, *path):
    """Generator keyed by ``(seed, *path)``; distinct keys give independent streams."""
    entropy = (int(seed),) + tuple(int(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))
