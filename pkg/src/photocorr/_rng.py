"""Splittable, counter-based seeding for chunked Monte-Carlo work.

Every chunk of a stochastic job gets its own Philox stream spawned from the
master seed, so the result depends only on (seed, chunk layout) and never on
how many workers ran the chunks or in which order they finished.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

THREADS_ENV = "PHOTOCORR_THREADS"


def default_workers() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return 1


def chunk_sizes(total: int, chunk: int) -> list[int]:
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def spawn_generators(seed: int | np.random.SeedSequence, count: int) -> list[np.random.Generator]:
    """Independent Philox generators for `count` chunks of one job."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(count)]


def map_chunks(func: Callable[..., T], args: Sequence[tuple], workers: int | None = None) -> list[T]:
    """Apply `func(*a)` to every argument tuple; results keep input order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(args) <= 1:
        return [func(*a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda a: func(*a), args))
