import pytest

# (criterion id, passed, detail) collected by the acceptance suite
CRITERIA = []


@pytest.fixture
def report():
    def record(cid, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {detail}"
        CRITERIA.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
