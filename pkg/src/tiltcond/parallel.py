"""Seeded block parallelism with schedule-independent results.

Work of ``total`` items is cut into fixed-size blocks. Block ``b`` draws from
its own generator ``default_rng(SeedSequence(seed, spawn_key=(b,)))``, and
results are returned in block order, so output does not depend on how many
workers ran the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_BLOCK = 1000


def block_sizes(total: int, block_size: int = DEFAULT_BLOCK) -> list[int]:
    full, rest = divmod(total, block_size)
    return [block_size] * full + ([rest] if rest else [])


def block_rng(seed: int, block: int, stream: tuple[int, ...] = ()) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*stream, block)))


def run_blocks(fn: Callable[[int, np.random.Generator], T], total: int, seed: int,
               threads: int = 1, block_size: int = DEFAULT_BLOCK, stream: tuple[int, ...] = ()) -> list[T]:
    """Call ``fn(size, rng)`` per block and return the results in block order.

    ``stream`` namespaces the block generators so independent runs sharing
    a seed (replications, baselines) draw from disjoint streams.
    """
    sizes = block_sizes(total, block_size)
    jobs = [(size, block_rng(seed, b, stream)) for b, size in enumerate(sizes)]
    if threads <= 1 or len(jobs) <= 1:
        return [fn(size, rng) for size, rng in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
