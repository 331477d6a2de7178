import pytest

from sdnlab.mlkit import Dataset, SplitSpec, correlation_select, fit, split
from sdnlab.scenarios import ScenarioConfig, gen_data
from sdnlab.telemetry import PROBE_VIEW


def matrix(reps, video, seed=0):
    return [ScenarioConfig.preset(s, lv, repetitions=reps, video=video, seed=seed)
            for s in ("s1", "s2", "s3") for lv in ("low", "high")]


@pytest.fixture(scope="session")
def probe_csv(tmp_path_factory):
    """600 probe-view rows: 100 per scenario and level."""
    path = tmp_path_factory.mktemp("probe") / "dataset.csv"
    gen_data(matrix(100, video=False), path)
    return path


@pytest.fixture(scope="session")
def probe_split(probe_csv):
    ds = Dataset.from_csv(probe_csv).select(PROBE_VIEW)
    return split(ds, SplitSpec(seed=0))


@pytest.fixture(scope="session")
def probe_model(probe_split):
    train, _, _ = probe_split
    sel = correlation_select(train, 0.3)
    return fit("logreg", train.select(sel.selected))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
