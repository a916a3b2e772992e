"""Deterministic RNG streams keyed by integers."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# spawn-key tags keep configuration and validation streams disjoint from walk streams
CONFIG_TAG = 0xC0F1_6000_0000
AUX_TAG = 0xA0C5_0000_0000


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for ``(seed, *key)``; different keys give independent streams."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def walk_stream(seed: int, point: int, walk: int) -> np.random.Generator:
    return stream(seed, point, walk)


def config_stream(seed: int, config: int) -> np.random.Generator:
    return stream(seed, CONFIG_TAG, config)


def aux_stream(seed: int, *key: int) -> np.random.Generator:
    return stream(seed, AUX_TAG, *key)
