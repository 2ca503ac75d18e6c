import pytest

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance line; printed immediately and again in the terminal summary."""

    def record(number: int, status: str, detail: str) -> None:
        line = f"criterion {number:>2}: {status:<9} {detail}"
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
