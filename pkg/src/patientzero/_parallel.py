import os
from concurrent.futures import ProcessPoolExecutor


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def pimap(fn, items, jobs=1):
    """Ordered lazy map, fanned out over ``jobs`` processes when ``jobs > 1``."""
    items = list(items)
    if jobs is None:
        jobs = default_jobs()
    if jobs <= 1 or len(items) <= 1:
        for x in items:
            yield fn(x)
        return
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        yield from pool.map(fn, items)


def pmap(fn, items, jobs=1):
    return list(pimap(fn, items, jobs))
