import numpy as np
import pytest

from hypoliouville.fields import Operator
from hypoliouville.liouville import heisenberg_group, heisenberg_operator


@pytest.fixture
def heis_L() -> Operator:
    return heisenberg_operator()


@pytest.fixture
def heis_G():
    return heisenberg_group()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the one-line acceptance verdicts at the end of the run."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) == "call" and "test_acceptance" in getattr(rep, "nodeid", ""):
                lines += [ln for ln in rep.capstdout.splitlines() if ln.startswith("criterion ")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(ln)
