"""Named random sub-streams derived from a single top-level seed."""

import zlib

import numpy as np


def _key(name):
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def substream(seed, *names):
    """Return a Generator keyed by ``seed`` and a path of names.

    The same ``(seed, names)`` always yields the same stream, independent of
    call order or process, so parallel workers stay reproducible.
    """
    entropy = [int(seed) & 0xFFFFFFFF] + [_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def subseed(seed, *names):
    """Integer seed for APIs that take ints rather than Generators."""
    return int(substream(seed, *names).integers(0, 2**31 - 1))
