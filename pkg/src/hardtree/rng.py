"""Seedable counter-based random number generation.

Philox is counter-based, so independent replica streams are cheap: every
(seed, stream) pair indexes a distinct, reproducible stream.
"""

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the given seed and replica stream."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
