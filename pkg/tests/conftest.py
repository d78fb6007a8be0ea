from __future__ import annotations

import pytest

from plapsys.system import parse_spec

COMPETITIVE = """\
[domain]
N = 2
extents = 0, 1; 0, 1

[exponents]
p = 2, 2
alpha = -0.2, 0.25
beta = 0.3, -0.15
gamma = 0, 0
theta = 0, 0
r = 3, 3

[envelope]
m = 1, 1
M = 1, 1

[f1]
expr = power

[f2]
expr = power
"""

CONSTANT = """\
[domain]
N = 1

[exponents]
p = 2, 2
alpha = 0, 0
beta = 0, 0
gamma = 0, 0
theta = 0, 0
r = 3, 3

[envelope]
m = 1, 1
M = 1, 1

[f1]
expr = 1

[f2]
expr = 1
"""

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def competitive_spec():
    return parse_spec(COMPETITIVE)


@pytest.fixture
def constant_spec():
    return parse_spec(CONSTANT)


@pytest.fixture
def spec_file(tmp_path):
    def write(text: str, name: str = "spec.ini"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
