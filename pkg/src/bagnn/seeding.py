"""Named random sub-streams derived from one seed."""

import zlib

import numpy as np


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` ("init", "sampling", "pruning", ...).

    The same (seed, name) always yields the same stream, and streams for
    different names do not depend on how much the others were consumed.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
