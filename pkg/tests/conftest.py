import pytest

# (criterion number, title, passed, detail) collected by the acceptance suite
ACCEPTANCE_RESULTS = []


@pytest.fixture
def record_criterion():
    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"{status} criterion {number:>2}: {title}" + (f" [{detail}]" if detail else "")
        print(line)
        ACCEPTANCE_RESULTS.append((number, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)
