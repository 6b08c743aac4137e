"""
Seed derivation: one integer seed fans out into independent named streams.

Every random decision of a run draws from a stream derived here, so a single
trial (or a single client's initialization) can be replayed in isolation.
"""

import numpy as np

# Stream tags mixed into the seed sequence entropy
STREAM_PARTITION = 1
STREAM_CLIENT_INIT = 2
STREAM_SERVER_INIT = 3
STREAM_SCHEDULE = 4
STREAM_SHUFFLE = 5
STREAM_TRIAL = 6
STREAM_EXPERIMENT = 7


def derive_seed(base: int, stream: int, *keys: int) -> int:
    """Return a 32-bit seed for (base, stream, *keys).

    Distinct key tuples give statistically independent streams; the mapping
    is stable across platforms and numpy versions.
    """
    entropy = [int(base) & 0xFFFFFFFF, int(stream), *(int(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(base: int, stream: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, stream, *keys))
