import pytest

from remlab.experiments import DatasetCache

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def shared_cache():
    """Replica runs shared across test modules; a smaller request reuses a larger run's prefix."""
    return DatasetCache()


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance line and return whether it passed."""
    def record(number: int, title: str, status: str, detail: str) -> str:
        line = f"[{status:6}] {number:2d}. {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return status
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
