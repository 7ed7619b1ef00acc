import pytest

from gcrefine.cli import load_model
from gcrefine.solver import default_smt_command, make_solver


def have_external() -> bool:
    return default_smt_command() is not None


@pytest.fixture(scope="session")
def solver():
    """External SMT process when one is installed, the MILP backend otherwise."""
    s = make_solver("external" if have_external() else "internal")
    yield s
    s.close()


@pytest.fixture(scope="session")
def internal_solver():
    s = make_solver("internal")
    yield s
    s.close()


@pytest.fixture
def model():
    return load_model


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
