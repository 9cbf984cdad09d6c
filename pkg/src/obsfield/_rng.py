"""Seeded, shard-stable random streams.

A draw of ``n`` samples is split into ``shards`` contiguous blocks, each fed
by its own child of ``SeedSequence(seed)``.  The concatenated result depends
only on ``(seed, n, shards)``, never on how many worker threads ran the
shards.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def shard_sizes(n: int, shards: int) -> list[int]:
    if shards < 1:
        raise ValueError("shards must be >= 1")
    base, extra = divmod(n, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def sharded(seed: int, n: int, draw, shards: int = 1, workers: int = 1) -> np.ndarray:
    """Concatenate ``draw(rng, size)`` over shards; ``draw`` must return arrays with a leading sample axis."""
    children = np.random.SeedSequence(seed).spawn(shards)
    sizes = shard_sizes(n, shards)

    def run(i):
        return draw(np.random.default_rng(children[i]), sizes[i])

    if workers > 1 and shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(shards)))
    else:
        parts = [run(i) for i in range(shards)]
    return np.concatenate(parts, axis=0)
