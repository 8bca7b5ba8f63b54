"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by integers, so the same (seed, stream id, ...) key always yields the same
numbers regardless of how many other streams were consumed in between.
Batch items get their own sub-keys, which keeps batched sampling bit-equal
to sampling the items one at a time.
"""

from __future__ import annotations

import numpy as np

_MIX = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def _fold(parts) -> np.ndarray:
    key = [0, 0]
    for i, p in enumerate(parts):
        v = int(p) & _MASK
        key[i % 2] ^= (v + _MIX * (i + 1)) & _MASK
    return np.array(key, dtype=np.uint64)


def stream(*key_parts: int) -> np.random.Generator:
    """Deterministic Philox stream for the given integer key tuple."""
    if not key_parts:
        raise ValueError("stream() needs at least one key part")
    return np.random.Generator(np.random.Philox(key=_fold(key_parts)))


def normal(shape, *key_parts: int, dtype=np.float32) -> np.ndarray:
    """Standard normal draw on its own stream."""
    return stream(*key_parts).standard_normal(shape).astype(dtype)
