"""Counter-based random streams keyed by (seed, purpose tag).

Each purpose gets its own Philox stream, so drawing more samples for one
purpose never shifts the draws of another.
"""

import zlib
from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]


def _entropy(seed: SeedLike, tag: str) -> list:
    if isinstance(seed, (int, np.integer)):
        words = [int(seed)]
    else:
        words = [int(s) for s in seed]
    if any(w < 0 for w in words):
        raise ValueError(f"seed words must be non-negative, got {words}")
    return words + [zlib.crc32(tag.encode("utf-8"))]


def stream(seed: SeedLike, tag: str = "sample") -> np.random.Generator:
    """Return a fresh generator for ``(seed, tag)``."""
    sequence = np.random.SeedSequence(_entropy(seed, tag))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: SeedLike, index: int) -> tuple:
    """Child seed for sub-task ``index`` (restart, ladder level, retry)."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed), int(index))
    return tuple(int(s) for s in seed) + (int(index),)


__all__ = ["SeedLike", "stream", "derive_seed"]
