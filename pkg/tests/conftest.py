import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Context manager recording pass/fail and runtime of one acceptance criterion."""
    results = request.config.stash[_RESULTS]

    @contextmanager
    def run(number, title, limit=None):
        t0 = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            dt = time.perf_counter() - t0
            in_time = limit is None or dt < limit
            note = f"{dt:.1f} s" + ("" if limit is None else f" (limit {limit:g} s)")
            results[number] = (ok and in_time, title, note)
        assert in_time, f"criterion {number} took {dt:.1f} s, limit {limit} s"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, note = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{note}]")
