import pytest

CRITERIA = {}


@pytest.fixture(scope="session")
def criteria():
    """Collects one ``(passed, detail)`` line per acceptance criterion."""
    return CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA):
        passed, detail = CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'} - {detail}")
