"""
Ordered worker pool for per-sample and per-candidate work.
"""

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, TypeVar

import structlog

from ..core.exceptions import ParameterError

logger = structlog.get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class PoolStats:
    """Counters for work dispatched through the pool."""
    submitted: int = 0
    completed: int = 0
    failed: int = 0
    busy_seconds: float = 0.0


class ConcurrencyManager:
    """Runs independent tasks on a thread pool and returns results in submission order.

    Results never depend on ``max_workers``: every task is a pure function of its
    item, and ``map_ordered`` reassembles outputs by position.
    """

    def __init__(self, max_workers: int = 1):
        if max_workers < 1:
            raise ParameterError(f"max_workers must be >= 1, got {max_workers}")
        self._max_workers = max_workers
        self._executor: Optional[ThreadPoolExecutor] = (
            ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="ensdiff") if max_workers > 1 else None
        )
        self._lock = threading.RLock()
        self.stats = PoolStats()

    @property
    def max_workers(self) -> int:
        return self._max_workers

    def _run(self, func: Callable[[T], R], item: T) -> R:
        started = time.perf_counter()
        try:
            result = func(item)
        except Exception:
            with self._lock:
                self.stats.failed += 1
            raise
        with self._lock:
            self.stats.completed += 1
            self.stats.busy_seconds += time.perf_counter() - started
        return result

    def map_ordered(self, func: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply func to every item; the first failure is re-raised after all tasks finish."""
        items = list(items)
        with self._lock:
            self.stats.submitted += len(items)
        if self._executor is None:
            return [self._run(func, item) for item in items]

        futures = [self._executor.submit(self._run, func, item) for item in items]
        results: List[R] = []
        error: Optional[BaseException] = None
        for future in futures:
            try:
                results.append(future.result())
            except Exception as exc:
                error = error or exc
        if error is not None:
            raise error
        return results

    def cleanup(self) -> None:
        """Shut down worker threads."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        logger.debug("pool_closed", completed=self.stats.completed, failed=self.stats.failed)

    def __enter__(self) -> "ConcurrencyManager":
        return self

    def __exit__(self, *exc_info) -> None:
        self.cleanup()
