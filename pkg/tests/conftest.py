import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report(request):
    """Record one acceptance line; printed again in the terminal summary."""
    lines = request.config.stash[_LINES]

    def _report(number: int, passed: bool, detail: str, seconds: float, limit: float):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number}: {status}  {detail}  [{seconds:.1f}s, limit {limit:g}s]"
        print(line)
        lines.append(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
