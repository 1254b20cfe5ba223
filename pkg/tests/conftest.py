import pytest

from tschsim.topology import build_paper_topology

# filled by test_acceptance; echoed after the run so each criterion shows one line
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def paper_topo():
    return build_paper_topology()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
