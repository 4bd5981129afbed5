import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def record(request):
    """Record one acceptance line: ``record(number, title, passed, detail, seconds)``."""
    results = request.config.stash[_RESULTS]

    def _record(number, title, passed, detail, seconds):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail}; {seconds:.3f}s)"
        results.append((number, line))
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
