from pathlib import Path

import pytest

from scionsim.engine import Engine
from scionsim.topology import builtin_topology
from scionsim.world import SimConfig

DATA = Path(__file__).resolve().parents[1] / "src" / "scionsim" / "data"


@pytest.fixture(scope="session")
def fig():
    return builtin_topology("fig")


@pytest.fixture(scope="session")
def fig_engine(fig):
    """Fig topology after 90 simulated seconds of beaconing."""
    engine = Engine(fig, SimConfig(), seed=0)
    engine.run(until=90)
    return engine


@pytest.fixture
def data():
    return DATA


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
