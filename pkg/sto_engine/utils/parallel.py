"""
Ordered thread-pool map. Results come back in input order whatever the
worker count, so callers can rely on bitwise-identical output.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)


def resolve_threads(threads=None):
    """Explicit value, else STO_THREADS, else 1."""
    if threads is None:
        threads = os.getenv("STO_THREADS", "1")
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        logger.warning(f"Ignoring invalid thread count {threads!r}")
        return 1
    return max(1, threads)


def ordered_map(fn, items, threads=None):
    items = list(items)
    workers = min(resolve_threads(threads), max(1, len(items)))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
