import pytest

ACCEPTANCE_COUNT = 12
_results = {}


class _Recorder:
    def __call__(self, number, title, ok, detail=""):
        _results[number] = (title, bool(ok), detail)
        return bool(ok)


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, title, ok, detail)``."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    ran = any(r.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance.py" in r.nodeid
              for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, []))
    if not ran:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in _results:
            title, ok, detail = _results[n]
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d} FAIL  not evaluated (test errored or was deselected)")
