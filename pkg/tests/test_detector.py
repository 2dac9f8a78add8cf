import numpy as np
import pytest
from hypothesis import given, strategies as st

from nestknn import detector
from nestknn.core import AtmosphericClass, LandSurfaceClass, PhaseLabel, Query, StageParams, WeightMatrix, utc
from nestknn.detector import (
    Detector,
    LandParams,
    _phase_cascade,
    detect_occurrence,
    detect_phase,
    exceeds,
    liquid_rule,
)
from nestknn.errors import ConfigError, ValidationError
from nestknn.knn import NeighborHit

import traces


def _hits(n_p, k):
    return [NeighborHit(i, float(i), AtmosphericClass.LIQUID if i < n_p else AtmosphericClass.CLEAR_SKY)
            for i in range(k)]


@pytest.mark.parametrize("k1,p1,n_p,expected", [(100, 0.5, 60, True), (100, 0.5, 50, False), (10, 0.9, 10, True)])
def test_occurrence(k1, p1, n_p, expected):
    assert detect_occurrence(_hits(n_p, k1), k1, p1) == (expected, n_p)


def test_occurrence_wrong_length():
    with pytest.raises(ValidationError):
        detect_occurrence(_hits(3, 5), 6, 0.5)


def test_exceeds_reads_p_as_written():
    # the double nearest 0.3 is below 3/10 and the one nearest 0.29 is below
    # 29/100; both must still behave as the decimal
    assert not exceeds(3, 0.3, 10) and exceeds(4, 0.3, 10)
    assert not exceeds(29, 0.29, 100) and exceeds(30, 0.29, 100)
    assert not exceeds(50, 0.5, 100) and exceeds(51, 0.5, 100)


@given(st.integers(1, 2000), st.data())
def test_exceeds_agrees_with_integer_sweep(k, data):
    # a swept threshold j / k must reproduce the ROC rule votes > j
    j = data.draw(st.integers(1, k - 1)) if k > 1 else 0
    votes = data.draw(st.integers(0, k))
    if j:
        assert exceeds(votes, j / k, k) == (votes > j)


@given(st.integers(0, 500), st.integers(1, 999), st.integers(1, 500))
def test_exceeds_decimal(votes, milli, k):
    assert exceeds(votes, milli / 1000, k) == (votes * 1000 > milli * k)


def test_trace_liquid():
    idx, s2, s3 = traces.liquid_case()
    phase, v2, v3 = _phase_cascade(np.arange(idx.size), traces.QUERY, s2, s3, idx)
    assert v2.counts == (30, 15, 5) and v3 is None
    assert phase is PhaseLabel.LIQUID
    assert detect_phase(idx.ids, traces.QUERY, s2, s3, idx) is PhaseLabel.LIQUID


def test_trace_solid():
    idx, s2, s3 = traces.solid_case()
    phase, v2, v3 = _phase_cascade(np.arange(idx.size), traces.QUERY, s2, s3, idx)
    assert v2.counts == (10, 35, 5)
    assert (v3.k, v3.counts) == (40, (32, 8))
    assert phase is PhaseLabel.SOLID


def test_trace_mixed():
    idx, s2, s3 = traces.mixed_case()
    phase, v2, v3 = _phase_cascade(np.arange(idx.size), traces.QUERY, s2, s3, idx)
    assert v2.counts == (10, 20, 20)
    assert (v3.k, v3.counts) == (36, (18, 18))
    assert phase is PhaseLabel.MIXED


def test_liquid_needs_unique_max():
    assert not liquid_rule(20, 20, 10, 50, 0.3)
    assert liquid_rule(21, 20, 9, 50, 0.3)
    assert not liquid_rule(25, 20, 5, 50, 0.5)


def test_stage3_clamps_to_pool():
    idx, s2, _ = traces.mixed_case()
    s3 = StageParams(200, traces.W3, 0.5)
    _, _, v3 = _phase_cascade(np.arange(idx.size), traces.QUERY, s2, s3, idx)
    assert v3.k == 40


def test_all_liquid_pool_is_liquid():
    idx = traces.build([AtmosphericClass.LIQUID] * 5, [])
    s2 = StageParams(5, traces.W2, 0.99)
    phase, _, v3 = _phase_cascade(np.arange(5), traces.QUERY, s2, StageParams(3, traces.W3, 0.5), idx)
    assert phase is PhaseLabel.LIQUID and v3 is None


def test_stage_constraint():
    W = WeightMatrix.identity(2)
    with pytest.raises(ConfigError, match=r"k_2<p_1\\times k_1"):
        LandParams(StageParams(100, W, 0.5), StageParams(50, W, 0.5), StageParams(10, W, 0.5))
    LandParams(StageParams(100, W, 0.5), StageParams(49, W, 0.5), StageParams(10, W, 0.5))


def test_unknown_pool_id():
    idx, s2, s3 = traces.liquid_case()
    with pytest.raises(ValidationError):
        detect_phase([999], traces.QUERY, s2, s3, idx)


# ---------------------------------------------------------------- on synthetic data

def _params(n_ch):
    W = WeightMatrix.identity(n_ch)
    lp = LandParams(StageParams(30, W, 0.5), StageParams(10, W, 0.4), StageParams(10, W, 0.5))
    return {land: lp for land in LandSurfaceClass}


def _centroid_query(scenario, land, atm):
    spec = next(s for s in scenario.specs if s.land is land and s.atmosphere is atm)
    snow = 0.9 if land is LandSurfaceClass.SNOW_COVERED else 0.1
    return Query(0, spec.mean, snow, 50.0, 0.0, utc(2016, 1, 1))


def test_centroids(small_scenario, small_db):
    det = Detector(small_db, _params(13))
    for land in LandSurfaceClass:
        q = _centroid_query(small_scenario, land, AtmosphericClass.CLEAR_SKY)
        assert not det.retrieve(q).precipitating
        for atm in (AtmosphericClass.LIQUID, AtmosphericClass.SOLID, AtmosphericClass.MIXED):
            d = det.retrieve(_centroid_query(small_scenario, land, atm))
            assert d.precipitating and d.phase is atm.phase
            assert d.land_class is land


def test_detection_carries_votes(small_scenario, small_db):
    det = Detector(small_db, _params(13))
    d = det.retrieve(_centroid_query(small_scenario, LandSurfaceClass.NO_SNOW, AtmosphericClass.SOLID))
    assert d.stage_votes[0].k == 30 and d.n_p > 15
    assert sum(d.phase_counts()) == 10
    assert len(d.stage_votes) == 3


def test_batch_independent_of_workers(small_scenario, small_db):
    det = Detector(small_db, _params(13))
    qs = [s.as_query() for s in small_scenario.holdout[:400]]
    assert det.retrieve_batch(qs, 1) == det.retrieve_batch(qs, 8)


def test_module_retrieve(small_scenario, small_db):
    spec = next(s for s in small_scenario.specs if s.atmosphere is AtmosphericClass.SOLID)
    d = detector.retrieve(spec.mean, spec.land, _params(13), small_db)
    assert d.phase is PhaseLabel.SOLID


def test_missing_stratum(small_db):
    from nestknn.database import AprioriDatabase
    db = AprioriDatabase(small_db.channel_order, {LandSurfaceClass.NO_SNOW: small_db.samples(LandSurfaceClass.NO_SNOW)})
    with pytest.raises(ValidationError):
        detector.retrieve([200.0] * 13, LandSurfaceClass.SNOW_COVERED, _params(13), db)
    with pytest.raises(ValidationError):
        Detector(db, _params(13))
