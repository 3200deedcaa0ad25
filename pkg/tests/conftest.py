import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one criterion outcome; the line is echoed at the end of the session."""
    results = request.config.stash.setdefault(_RESULTS, [])

    def record(number: int, title: str, ok: bool, detail: str, seconds: float, limit: float):
        timely = seconds < limit
        passed = bool(ok) and timely
        results.append((number, f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {title}: {detail} "
                                f"[{seconds:.1f} s, limit {limit:g} s]"))
        assert ok, detail
        assert timely, f"took {seconds:.1f} s, limit {limit:g} s"

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
