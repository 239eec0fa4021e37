"""Splittable counter-based random streams.

Every stochastic object in the package draws from a Philox generator whose
128-bit key encodes (base seed, domain tag, payload).  Distinct keys give
statistically independent streams, so replicates, distance classes, lazy
reveal chains and walkers can each own a stream without any global state
or ordering constraints.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Domain tags.  Each family of streams gets its own tag so payloads can
# never collide across families.
TAG_EAGER_CLASS = 1
TAG_LAZY_CHAIN = 2
TAG_WALKER = 3
TAG_REPLICATE = 4
TAG_GENERIC = 5


def zigzag(x: int) -> int:
    """Map a signed integer to an unsigned one, small magnitudes first."""
    return (x << 1) ^ (x >> 63) if x >= 0 else ((-x) << 1) - 1


def stream(seed: int, tag: int, payload: int = 0) -> np.random.Generator:
    """Generator keyed by (seed, tag, payload).

    payload must fit in 56 bits; callers pack side bits and zigzagged
    vertex labels themselves.
    """
    if not 0 <= payload < (1 << 56):
        raise ValueError(f"stream payload out of range: {payload}")
    key = np.array(
        [seed & _MASK64, ((tag << 56) | payload) & _MASK64], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def replicate_seed(seed: int, index: int) -> int:
    """Derive an independent 63-bit seed for replicate number index."""
    g = stream(seed, TAG_REPLICATE, index)
    return int(g.integers(0, 1 << 63))


def spawn_seeds(seed: int, count: int) -> list[int]:
    return [replicate_seed(seed, i) for i in range(count)]
