import numpy as np
import pytest

from nestknn import synthetic
from nestknn.core import MatchedSample, PhaseLabel, utc
from nestknn.database import build_balanced_database


def make_sample(sample_id=0, tb=None, rate=0.0, ref=None, snow=0.0, n=13, **kw):
    tb = tuple(float(v) for v in (tb if tb is not None else np.full(n, 200.0)))
    fields = dict(skin_temp=280.0, air_temp=281.0, latitude=10.0, longitude=20.0,
                  timestamp=utc(2015, 7, 1))
    fields.update(kw)
    if rate > 0 and ref is None and "active_phase" not in kw:
        ref = PhaseLabel.LIQUID
    return MatchedSample(sample_id=sample_id, tb=tb, rate=rate, snow_fraction=snow,
                         ref_phase=ref, **fields)


@pytest.fixture(scope="session")
def small_scenario():
    return synthetic.scenario_separable(6.0, 600, seed=11, n_holdout=300)


@pytest.fixture(scope="session")
def small_db(small_scenario):
    return build_balanced_database(small_scenario.build, 1200, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
