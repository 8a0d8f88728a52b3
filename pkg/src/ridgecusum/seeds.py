"""Named, counter-based random substreams derived from one master seed.

A stream is addressed by ``(seed, name, index)``; adding a new named consumer
never shifts the draws of existing ones, and chunked work gives identical
results for any worker count.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    key = (zlib.crc32(name.encode("utf-8")), int(index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    full, rest = divmod(int(total), int(chunk))
    return [chunk] * full + ([rest] if rest else [])
