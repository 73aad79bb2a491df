"""Seeded, named random streams.

All randomness in the package comes from Philox, a counter-based bit
generator. A stream is identified by the run seed plus a name (and optional
integers such as an epoch), so adding a new consumer never shifts the draws
of an existing one.
"""

import zlib

import numpy as np


def make_rng(seed: int, name: str = "default", *extra: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is mandatory")
    key = [int(seed), zlib.crc32(name.encode("utf-8")), *map(int, extra)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
