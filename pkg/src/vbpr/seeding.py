"""Named random sub-streams derived from a single 64-bit seed."""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Independent generator for ``(seed, names...)``.

    The same seed and names always give the same stream, and streams with
    different names do not overlap in practice (SeedSequence spawn keys).
    """
    key = tuple(stream_key(n) if isinstance(n, str) else int(n) for n in names)
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
