import numpy as np
import pandas as pd
import pytest

from epexforest import forest, pipeline, synth

ACCEPTANCE_LINES = []


def report(name, ok, detail=""):
    """Record and print one acceptance line, then fail the test if needed."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_panel(n, seed=0, start="2020-01-06"):
    """Gap-free panel of all 13 source variables with positive prices."""
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range(start, periods=n)
    cols = {}
    for name in pipeline.SOURCE_VARIABLES:
        cols[name] = np.exp(rng.normal(3.0, 0.2, n)) if name not in ("i", "temp") else rng.normal(0, 1, n)
    cols["eurusd"] = np.exp(rng.normal(0.15, 0.05, n))
    return pipeline.DailyPanel.from_columns(dates, cols)


# 2,644 working days leave 2,600 design rows after the 44-day warm-up
SCENARIO_HORIZON = 2644


@pytest.fixture(scope="session")
def scenario():
    return synth.ScenarioSpec(horizon=SCENARIO_HORIZON)


@pytest.fixture(scope="session")
def scenario_design(scenario):
    panel = pipeline.prepare_panel(synth.generate(scenario))
    return pipeline.build_design(panel, target="base")


@pytest.fixture(scope="session")
def scenario_forest(scenario_design):
    return forest.fit_forest(scenario_design, forest.ForestParams(n_trees=500, min_node_size=10, seed=1))
