"""Deterministic random streams, independent of evaluation order.

Two stream families, both keyed on a single user seed:

* :func:`substream` — a generator derived from ``SeedSequence(seed,
  spawn_key=path)``.  Robust and collision-free, used where a handful of
  streams is enough (per-scan-point counting noise).
* :func:`bit_stream` — counter-based Philox jumped to a bit index.  Creating
  one costs microseconds, so per-bit streams stay cheap even for millions of
  channel uses, and bit ``i`` draws the same variates whether bits are
  sampled one by one or in vectorized blocks.
"""

from __future__ import annotations

import numpy as np

#: domain-separation salt so bit streams never collide with other uses of a seed
BIT_STREAM_SALT = 0x9E3779B97F4A7C15


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for one labelled point in the program."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=path)))


def bit_stream(seed: int, index: int) -> np.random.Generator:
    """Generator for channel use ``index`` of the bit-transport protocol."""
    return np.random.Generator(
        np.random.Philox(key=[seed & (2**64 - 1), BIT_STREAM_SALT]).jumped(index))


def bit_uniforms(seed: int, start: int, count: int, draws: int) -> np.ndarray:
    """Uniforms for a contiguous block of channel uses, shape (count, draws).

    Row ``i`` equals the first ``draws`` uniforms of ``bit_stream(seed,
    start + i)``, so block sampling and one-at-a-time sampling agree
    bit for bit.
    """
    out = np.empty((count, draws))
    base = np.random.Philox(key=[seed & (2**64 - 1), BIT_STREAM_SALT]).jumped(start)
    for i in range(count):
        out[i] = np.random.Generator(base.jumped(i)).random(draws)
    return out
