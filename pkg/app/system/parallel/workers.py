"""Thread pool helpers with a deterministic result order."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

MAX_WORKERS_ENV = "MOSAICLAB_MAX_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_worker_count(requested: int = 0, environ: Optional[dict] = None) -> int:
    """``requested <= 0`` means one worker per CPU; the environment variable caps the result."""

    env = os.environ if environ is None else environ
    count = requested if requested > 0 else (os.cpu_count() or 1)
    cap_value = env.get(MAX_WORKERS_ENV)
    if cap_value:
        try:
            cap = int(cap_value)
        except ValueError:
            cap = 0
        if cap > 0:
            count = min(count, cap)
    return max(1, count)


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every item; results come back in input order whatever the worker count."""

    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="mosaiclab") as pool:
        return list(pool.map(fn, items))
