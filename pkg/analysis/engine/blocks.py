"""Per-block parallel map with results returned in block order."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar('T')


def map_blocks(fn: Callable[[int], T], indices: Iterable[int], workers: int = 1) -> List[T]:
    indices = list(indices)
    if workers <= 1 or len(indices) < 2:
        return [fn(k) for k in indices]
    # fn must not share mutable state across blocks
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))
