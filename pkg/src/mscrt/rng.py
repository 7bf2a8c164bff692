"""Counter-based random substreams.

Every random draw in the package comes from a generator keyed by a master
seed plus a tuple of integers (purpose tag, copy index, ...). A given key
always yields the same stream, so serial and parallel execution agree bit
for bit.
"""

from __future__ import annotations

import numpy as np

# purpose tags
SAMPLER = 0
STATISTIC = 1
RANDOMIZE = 2
DISTILL = 3
DATA = 4
GROUP = 5
REPLICATION = 6

_MASK64 = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit integer seed derived from ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_generator(rng) -> np.random.Generator:
    """Coerce ``None``, an int seed or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
