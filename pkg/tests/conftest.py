from pathlib import Path

import numpy as np
import pytest

from foldover.io import read_data, read_design

FIXTURES = Path(__file__).parent / "fixtures"


def load(name):
    return read_design(FIXTURES / f"{name}.json")


@pytest.fixture(scope="session")
def ethylene():
    design = load("ethylene")
    _, y = read_data(FIXTURES / "ethylene_data.csv", design)
    return design, y


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for status in ("passed", "failed"):
        for rep in terminalreporter.stats.get(status, []):
            if rep.when == "call" and "test_acceptance.py::test_criterion_" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in sorted(lines, key=lambda x: int(x[0].split("_")[2])):
        terminalreporter.write_line(f"{verdict}  {name}")
