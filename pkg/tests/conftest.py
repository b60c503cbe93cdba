from pathlib import Path

import pytest

from byzcone.scenario import Scenario, load_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"

CORPUS = ("minimal", "ping", "chain", "ghost", "vat", "investigators")


def scenario(name: str) -> Scenario:
    return load_scenario(SCENARIO_DIR / f"{name}.toml")


@pytest.fixture(scope="session")
def minimal():
    return scenario("minimal")


@pytest.fixture(scope="session")
def ping():
    return scenario("ping")


@pytest.fixture(scope="session")
def chain():
    return scenario("chain")


@pytest.fixture(scope="session")
def ghost():
    return scenario("ghost")


@pytest.fixture(scope="session")
def vat():
    return scenario("vat")


@pytest.fixture(scope="session")
def investigators():
    return scenario("investigators")


@pytest.fixture(scope="session")
def ping_universe(ping):
    return ping.universe()


@pytest.fixture(scope="session")
def vat_universe(vat):
    return vat.universe()


@pytest.fixture(scope="session")
def corpus():
    return {name: scenario(name) for name in CORPUS}


# ---------------------------------------------------------------------------
# Acceptance-criteria reporting: each criterion test records its verdict
# here; the summary prints one line per criterion at the end of the run.
# ---------------------------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        desc, ok = ACCEPTANCE_RESULTS[n]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {n} {desc}: {verdict}")
