"""Order-preserving block execution over a worker pool."""
from __future__ import annotations

import logging
import pickle
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

log = logging.getLogger(__name__)


def map_blocks(func: Callable[[T], R], jobs: Sequence[T], workers: int = 1) -> list[R]:
    """Apply ``func`` to every job and return results in job order.

    With ``workers > 1`` jobs go to a process pool; if the jobs cannot be
    pickled (user lambdas, closures) a thread pool is used instead.  Results
    are always returned in submission order so downstream reductions are
    independent of scheduling.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    nproc = min(workers, len(jobs))
    try:
        pickle.dumps((func, jobs[0]))
    except Exception:  # noqa: BLE001 - any pickling failure means "use threads"
        log.info("jobs are not picklable; running %d blocks on threads", len(jobs))
        with ThreadPoolExecutor(max_workers=nproc) as pool:
            return list(pool.map(func, jobs))
    with ProcessPoolExecutor(max_workers=nproc) as pool:
        return list(pool.map(func, jobs))
