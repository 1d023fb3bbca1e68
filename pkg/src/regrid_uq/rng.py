"""Keyed random streams.

All randomness in the toolkit flows through :func:`stream`, which builds a
counter-based Philox generator from a master seed and a tuple of integer or
string keys. Two calls with the same seed and keys return generators that
produce identical output, regardless of what else has been drawn, so any
piece of a study can be recomputed in isolation and results do not depend on
execution order.
"""
import zlib

import numpy as np


def _key_word(k):
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError(f"stream keys must be non-negative, got {k}")
        return int(k)
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    raise TypeError(f"unsupported stream key {k!r}")


def stream(seed, *keys):
    """Return a ``numpy.random.Generator`` keyed by ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_word(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
