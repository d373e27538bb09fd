"""Named random streams derived from a single integer seed."""
import zlib

import numpy as np


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def stream(seed, name, *extra):
    """Independent generator for ``(seed, name, *extra)``; stable across runs."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, stream_key(name)]
    for e in extra:
        if isinstance(e, str):
            words.append(stream_key(e))
        else:
            words.append(int(e) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


def derive_seed(seed, *parts):
    """A fresh 63-bit integer seed from ``seed`` and labels/values."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for p in parts:
        words.append(stream_key(p) if isinstance(p, str) else int(p) & 0xFFFFFFFFFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)
