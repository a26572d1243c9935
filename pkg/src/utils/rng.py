"""
Seeded random streams.

Every stochastic step draws from a Philox (counter-based) generator keyed by a master seed
plus a stream path such as (cell_index, replicate_index), so results do not depend on the
order in which parallel workers run.
"""

from typing import Tuple

import numpy as np


def _seed_sequence(seed: int, stream: Tuple[int, ...]) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))


def make_generator(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``stream``"""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, stream)))


def derive_seed(seed: int, *stream: int) -> int:
    """32-bit integer seed for libraries that only accept ``random_state`` ints"""
    return int(_seed_sequence(seed, stream).generate_state(1, dtype=np.uint32)[0] >> 1)
