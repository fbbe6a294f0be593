import sys

import pytest

from resa.forecast import save_model, train_bundle
from resa.synthgen import ScenarioParams, generate, save_scenario


@pytest.fixture(scope="session")
def small_scenario():
    return generate(ScenarioParams(seed=7, n_cities=3, n_users=12, n_history_days=60))


@pytest.fixture(scope="session")
def scenario_dir(tmp_path_factory):
    """Default-sized scenario bundle on disk with a trained model next to it."""
    out = tmp_path_factory.mktemp("scenario")
    sc = generate(ScenarioParams(seed=7))
    save_scenario(sc, out)
    save_model(train_bundle(sc.observations, sc.demand_log), out / "model.json")
    return out


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    sc = generate(ScenarioParams(seed=3, n_cities=3, n_users=10, n_history_days=90))
    save_scenario(sc, out)
    save_model(train_bundle(sc.observations, sc.demand_log), out / "model.json")
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
