"""Fixed-block path parallelism with deterministic, index-ordered reduction."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

BLOCK_SIZE = 256


def blocks(n_items, block_size=BLOCK_SIZE):
    """Half-open index ranges of fixed size; the split never depends on thread count."""
    return [(lo, min(lo + block_size, n_items)) for lo in range(0, n_items, block_size)]


def map_blocks(fn, n_items, threads=1, block_size=BLOCK_SIZE):
    """Apply ``fn(lo, hi)`` to every block and return results in block order."""
    ranges = blocks(n_items, block_size)
    if threads <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), ranges))
