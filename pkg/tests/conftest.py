import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from scbank import CellParams, default_scenario
from scbank.scenario import DEFAULT_CELL

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cell():
    return DEFAULT_CELL


@pytest.fixture
def cell5():
    return CellParams(c0=600.0, kv=150.0, rs=0.25e-3, rdc=0.5e-3, n_groups=5, u_rated=2.7)


@pytest.fixture
def scenario():
    return default_scenario()


@pytest.fixture
def short_scenario():
    return default_scenario(**{"sim.t_end": 3.0})


def run_module(*args, env=None, cwd=None):
    """Run ``python -m scbank.cli`` in a subprocess."""
    import subprocess
    e = dict(os.environ)
    if env:
        e.update(env)
    return subprocess.run([sys.executable, "-m", "scbank.cli", *args], env=e, cwd=cwd,
                          capture_output=True, text=True)
