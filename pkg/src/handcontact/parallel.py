"""Order-preserving map over a bounded worker pool."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def map_ordered(fn, items, threads=1):
    """``list(map(fn, items))``, optionally spread over ``threads`` workers.

    Results come back in input order, so output never depends on scheduling.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
