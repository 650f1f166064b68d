"""Named random substreams derived from a single root seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        if name < 0:
            raise ValueError(f"stream key must be non-negative, got {name}")
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def substream(seed: int, name: str, *keys: str | int) -> np.random.Generator:
    """Return a generator for ``(seed, name, *keys)``.

    Streams with different names or keys are statistically independent, and
    the same tuple always yields the same stream.
    """
    entropy = [int(seed), stream_key(name), *(stream_key(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
