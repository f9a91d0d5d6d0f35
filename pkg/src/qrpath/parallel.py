"""Ordered worker-pool map used by the CV engine and the CLI."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from .exceptions import ValidationError

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "QRPATH_THREADS"


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else ``$QRPATH_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if threads < 1:
        raise ValidationError(f"thread count must be at least 1, got {threads}")
    return int(threads)


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """``[fn(x) for x in items]``, results in input order whatever the pool size."""
    items = list(items)
    k = resolve_threads(threads)
    if k == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))
