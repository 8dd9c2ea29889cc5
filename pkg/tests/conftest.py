from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from proxtrust.config import load_config
from proxtrust.sim import run

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "proxtrust" / "scenarios"

settings.register_profile("default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scenario_path():
    return lambda name: SCENARIOS / f"{name}.json"


@pytest.fixture(scope="session")
def reference_report():
    """One run of the bundled reference scenario, shared across test modules."""
    return run(load_config(SCENARIOS / "reference.json"))


@pytest.fixture(scope="session")
def chain_report():
    return run(load_config(SCENARIOS / "chain.json"))


@pytest.fixture(scope="session")
def star_report():
    return run(load_config(SCENARIOS / "star.json"))


# acceptance results, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  AC{n} {name}: {detail}")
