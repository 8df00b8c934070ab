"""Deterministic row-band parallelism.

Workers write to disjoint row slices of preallocated arrays, so the
arithmetic per pixel is identical regardless of thread count and
outputs stay byte-identical.  Thread count comes from MOCKSHADE_THREADS
unless set explicitly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional


def thread_count(override: Optional[int] = None) -> int:
    if override is not None:
        return max(1, int(override))
    env = os.environ.get("MOCKSHADE_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def run_rows(worker: Callable[[int, int], None], height: int,
             threads: Optional[int] = None) -> None:
    """Call worker(j0, j1) over disjoint row bands covering [0, height)."""
    n = min(thread_count(threads), height)
    if n <= 1:
        worker(0, height)
        return
    bounds = [round(i * height / n) for i in range(n + 1)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        futures = [
            pool.submit(worker, bounds[i], bounds[i + 1])
            for i in range(n)
            if bounds[i] < bounds[i + 1]
        ]
        for f in futures:
            f.result()
