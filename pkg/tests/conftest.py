import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(k, ok, detail)`` prints one PASS/FAIL line and keeps it for the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def emit(k, ok, detail):
        line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        lines.append((k, line))
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
