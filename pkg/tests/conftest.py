import pytest

_LINES = {}


@pytest.fixture
def record_criterion(capsys):
    """Print and remember one PASS/FAIL line per acceptance criterion."""

    def record(n, checks):
        failed = [name for name, ok in checks if not ok]
        line = f"CRITERION {n}: {'FAIL' if failed else 'PASS'}"
        if failed:
            line += "  (failed: " + "; ".join(failed) + ")"
        _LINES[n] = line
        with capsys.disabled():
            print("\n" + line)
        return not failed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
