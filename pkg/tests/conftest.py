import numpy as np
import pytest

from asynciter import instances
from asynciter.problem import reference_fixed_point


@pytest.fixture(scope="session")
def suite_instances():
    """The three acceptance instances with their reference solutions."""
    out = {}
    for name in ("scalar", "lasso10", "box50"):
        p = instances.builtin(name)
        z, y = reference_fixed_point(p, 1e-12)
        out[name] = (p, z, y)
    return out


@pytest.fixture(scope="session")
def enet():
    p = instances.elastic_net()
    z, y = reference_fixed_point(p, 1e-12)
    return p, z, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in rep.nodeid and rep.when == "call":
                name = rep.nodeid.split("::")[-1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")
