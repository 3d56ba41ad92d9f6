"""Counter-based random streams.

Every stochastic routine derives its generator from
``substream(master_seed, *key)`` where the key encodes (path index,
stream kind). Philox is counter-based, so streams are independent,
reproducible, and order-independent under parallel path generation.
"""

from __future__ import annotations

import numpy as np

# stream kinds appended as the last key component
STREAM_NOISE = 0
STREAM_FORCING = 1
STREAM_FROZEN = 2


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for (master_seed, *key), e.g. (seed, path, kind)."""
    if master_seed < 0:
        raise ValueError("master seed must be a nonnegative integer")
    seq = np.random.SeedSequence([int(master_seed), *(int(k) for k in key)])
    return np.random.Generator(np.random.Philox(seq))
