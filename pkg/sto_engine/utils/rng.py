"""
Counter-based random streams derived from one master seed.

Every consumer asks for a stream by a string tag plus integer keys, so adding
a new consumer never shifts the draws another one sees.
"""
import zlib

import numpy as np


def _tag_word(tag):
    return zlib.crc32(str(tag).encode("utf-8"))


def seed_sequence(seed, tag=None, *keys):
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    if tag is not None:
        entropy.append(_tag_word(tag))
    entropy.extend(int(k) for k in keys)
    return np.random.SeedSequence(entropy)


def child_generator(seed, tag=None, *keys):
    """Philox-backed generator for (seed, tag, keys)."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, tag, *keys)))


def realization_streams(seed, count, tag="realization"):
    """One independent Philox generator per realization, in index order."""
    children = seed_sequence(seed, tag).spawn(int(count))
    return [np.random.Generator(np.random.Philox(child)) for child in children]
