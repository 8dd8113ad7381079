import pytest

from lidonor.units import MaterialParams


@pytest.fixture(scope="session")
def params():
    return MaterialParams()


@pytest.fixture(scope="session")
def oracle_reports(params):
    """The benchmark oracle suite, computed once per session (~30 s)."""
    from lidonor.oracles import default_suite

    return {r.quantity: r for r in default_suite(params)}


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
