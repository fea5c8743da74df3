import pytest

_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record ``(passed, detail)`` for an acceptance criterion and echo it."""
    store = request.config.stash.setdefault(_KEY, {})

    def record(k, passed, detail):
        line = f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}"
        store[k] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_KEY, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for k in sorted(store):
            terminalreporter.write_line(store[k])
