"""Order-preserving process parallelism shared by dataset and candidate loops."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

JOBS_ENV = "DIFFUSE_TOF_JOBS"


def default_jobs() -> int:
    value = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(value)
    except ValueError:
        return 1
    return max(jobs, 1)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        return default_jobs()
    return (os.cpu_count() or 1) if jobs <= 0 else int(jobs)


def parallel_map(fn, items, jobs: int | None = 1) -> list:
    """``[fn(x) for x in items]``, optionally in worker processes; order is preserved."""
    items = list(items)
    jobs = resolve_jobs(jobs)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
