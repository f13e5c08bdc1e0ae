import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(id, title, passed, detail)``."""
    results = request.config.stash[_RESULTS]

    def record(cid, title, passed, detail=""):
        results.append((cid, title, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {title} | {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, passed, detail in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {cid:>2}. {title}: {detail}")
