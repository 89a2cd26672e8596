import logging
from typing import Callable, List, Sequence, TypeVar

import numpy as np
from joblib import Parallel, delayed

from apps.core.settings_manager import EngineSettings

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def resolve_threads(threads=None) -> int:
    if threads is None:
        return EngineSettings.get_threads()
    return max(1, int(threads))


def chunk_bounds(n_items: int, n_chunks: int) -> List[tuple]:
    """Split ``range(n_items)`` into at most ``n_chunks`` contiguous (start, stop) blocks."""
    n_chunks = max(1, min(n_chunks, n_items))
    edges = np.linspace(0, n_items, n_chunks + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def ordered_map(func: Callable[[T], R], items: Sequence[T], threads=None) -> List[R]:
    """Apply ``func`` to every item on a thread pool; results keep input order.

    Output never depends on the thread count: each item is processed
    independently and the caller reduces the list in order.
    """
    n_jobs = resolve_threads(threads)
    if n_jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} tasks on {n_jobs} threads")
    with Parallel(n_jobs=n_jobs, prefer='threads') as parallel:
        return parallel(delayed(func)(item) for item in items)
