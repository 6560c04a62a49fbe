"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator seeded from a
``SeedSequence``. PCG64 output for a given seed is fixed across platforms and
numpy versions, so test vectors built on it stay stable.
"""

import numpy as np


def make_rng(seed, *stream):
    """Generator for ``seed`` and an optional tuple of integer stream tags.

    ``make_rng(7, fold, 2)`` and ``make_rng(7, fold, 3)`` are independent
    streams derived from the same master seed.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(s) for s in stream)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
