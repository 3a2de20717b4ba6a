import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion_report():
    """Record ``(criterion id, passed, detail)``; printed in the terminal summary."""
    def record(name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
