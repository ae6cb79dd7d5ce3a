"""Counter-based random streams keyed by (seed, replica, stage, ...)."""

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for the given key path.

    The same key path always yields the same stream, regardless of which
    process or in which order the streams are created.
    """
    if seed is None:
        raise ValueError("a seed is mandatory")
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError("seed and stream keys must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
