from pathlib import Path

import pytest

from scl.cognition import MockEngine
from scl.orchestrator import load_task_file, run
from scl.tools import default_registry

REPO = Path(__file__).resolve().parent.parent
EXPERIMENTS = REPO / "experiments"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def weather_spec():
    return load_task_file(EXPERIMENTS / "weather.task")


@pytest.fixture(scope="session")
def allocation_spec():
    return load_task_file(EXPERIMENTS / "allocation.task")


@pytest.fixture(scope="session")
def exp1_log(weather_spec):
    return run(weather_spec, MockEngine(), default_registry())


@pytest.fixture(scope="session")
def exp2_log(allocation_spec):
    return run(allocation_spec, MockEngine(), default_registry())
