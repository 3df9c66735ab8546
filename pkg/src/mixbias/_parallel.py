"""Reproducible random streams and an order-preserving parallel map."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; identical across runs."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def parallel_map(fn, items, workers=1):
    """``[fn(x) for x in items]``, optionally on a thread pool; order is kept."""
    if workers is None or workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed derived from ``(seed, *key)``."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(key)).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))
