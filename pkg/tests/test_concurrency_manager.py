import threading

import pytest

from ensdiff.core.exceptions import ParameterError
from ensdiff.services.concurrency_manager import ConcurrencyManager


def test_serial_pool_runs_in_caller_thread():
    pool = ConcurrencyManager(1)
    names = pool.map_ordered(lambda _: threading.current_thread().name, range(3))
    assert set(names) == {threading.current_thread().name}
    assert pool.stats.completed == 3


def test_results_keep_submission_order():
    with ConcurrencyManager(4) as pool:
        assert pool.map_ordered(lambda x: x * x, range(20)) == [x * x for x in range(20)]
        assert pool.stats.submitted == 20
        assert pool.stats.completed == 20


@pytest.mark.parametrize("workers", [1, 3])
def test_failure_is_reraised(workers):
    def work(x):
        if x == 2:
            raise ValueError("bad item")
        return x

    with ConcurrencyManager(workers) as pool:
        with pytest.raises(ValueError, match="bad item"):
            pool.map_ordered(work, range(5))
        assert pool.stats.failed == 1


def test_rejects_zero_workers():
    with pytest.raises(ParameterError):
        ConcurrencyManager(0)


def test_usable_after_cleanup():
    pool = ConcurrencyManager(2)
    pool.cleanup()
    assert pool.map_ordered(str, [1, 2]) == ["1", "2"]
