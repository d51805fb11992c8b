import pytest

# criterion id -> "PASS ..." / "FAIL ..." line, filled in by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(key, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {key}: {detail}"
        ACCEPTANCE[key] = line
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        terminalreporter.write_line(ACCEPTANCE[key])
