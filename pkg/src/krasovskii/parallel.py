"""Worker-count control for sample sweeps and ensembles.

The KRASOVSKII_THREADS environment variable caps the number of worker
threads; the default is a single worker, which keeps runs trivially
deterministic.  Results are always merged in submission order, so the
outcome does not depend on the executor.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["worker_count", "ordered_map"]


def worker_count() -> int:
    raw = os.environ.get("KRASOVSKII_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"KRASOVSKII_THREADS must be an integer, got {raw!r}")
    return max(1, min(cap, os.cpu_count() or 1))


def ordered_map(fn, items):
    """Map preserving input order; parallel only when workers > 1."""
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
