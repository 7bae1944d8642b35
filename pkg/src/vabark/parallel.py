"""Deterministic parallelism helpers.

Per-item RNG streams are derived from (seed, tag, *keys) so results do not
depend on worker count or scheduling; ordered_map preserves input order.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np


def derived_rng(seed: int, tag: str, *keys: int) -> np.random.Generator:
    """Independent generator for one (purpose, keys) slot of a seeded run."""
    entropy = (int(seed), zlib.crc32(tag.encode("utf-8")), *(int(k) & 0xFFFFFFFF for k in keys))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def ordered_map(fn: Callable, items: Sequence | Iterable, jobs: int = 1) -> list:
    """Map preserving input order; jobs > 1 fans out over a thread pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
