import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestknn import config
from nestknn.core import DEFAULT_CHANNEL_ORDER, LandSurfaceClass, StageParams, WeightMatrix
from nestknn.detector import LandParams
from nestknn.errors import ConfigError


def test_defaults():
    cfg = config.parse_config("")
    assert cfg.channel_order == DEFAULT_CHANNEL_ORDER
    assert cfg.weight(LandSurfaceClass.NO_SNOW, 2) == WeightMatrix.identity(13)
    assert cfg.season_window is None


def test_comments_and_scalars():
    cfg = config.parse_config("# note\nseed = 9\n\nworkers=3\nseason_strict = yes\n")
    assert (cfg.seed, cfg.workers, cfg.season_strict) == (9, 3, True)


@pytest.mark.parametrize("text, where", [
    ("seed 9", ":1:"),
    ("seed = 1\nseed = 2", ":2:"),
    ("seed = 1\nbogus = 2", ":2: bogus"),
    ("workers = many", ":1: workers"),
    ("candidate_k = 0,5", ":1: candidate_k"),
    ("weights.ocean.stage1 = identity", ":1:"),
])
def test_diagnostics_name_the_line(text, where):
    with pytest.raises(ConfigError, match=where):
        config.parse_config(text, "cfg")


@pytest.mark.parametrize("text", [
    "ref_threshold = 1.0", "database_size = 3", "grid_cell_deg = 0",
    "wrf_phase_rule = other", "season_window_start = 2015-06-01",
    "channel_count = 4\nchannel_order = a,b,c",
])
def test_rejected_values(text):
    with pytest.raises(ConfigError):
        config.parse_config(text)


def test_candidate_k_per_stage():
    cfg = config.parse_config("candidate_k = 5,10\ncandidate_k_stage3 = 3")
    assert cfg.candidate_k == {1: (5, 10), 2: (5, 10), 3: (3,)}
    cfg = config.parse_config("candidate_k_stage3 = 3\ncandidate_k = 5,10")
    assert cfg.candidate_k[3] == (3,)


def test_channel_count_without_names():
    cfg = config.parse_config("channel_count = 5")
    assert cfg.channel_order == ("ch0", "ch1", "ch2", "ch3", "ch4")


def test_weights_forms(tmp_path):
    np.savetxt(tmp_path / "w.txt", np.diag([1.0, 2.0, 3.0]))
    (tmp_path / "d.txt").write_text("4 5 6\n")
    (tmp_path / "cfg").write_text(
        "channel_order = a,b,c\n"
        "weights.snow.stage1 = diag:1,2,3\n"
        "weights.snow.stage2 = full:2,1,0;1,2,0;0,0,1\n"
        "weights.nosnow.stage1 = file:w.txt\n"
        "weights.nosnow.stage2 = file:d.txt\n"
    )
    cfg = config.load_config(tmp_path / "cfg")
    snow, nosnow = LandSurfaceClass.SNOW_COVERED, LandSurfaceClass.NO_SNOW
    assert cfg.weight(snow, 1) == WeightMatrix.diagonal([1, 2, 3])
    assert cfg.weight(snow, 2).entries[0][1] == 1.0
    assert cfg.weight(nosnow, 1) == WeightMatrix.diagonal([1, 2, 3])
    assert cfg.weight(nosnow, 2) == WeightMatrix.diagonal([4, 5, 6])
    assert cfg.weight(nosnow, 3) == WeightMatrix.identity(3)


def test_weight_dimension_checked():
    with pytest.raises(ConfigError, match="dimension"):
        config.parse_config("weights.snow.stage1 = diag:1,2")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load_config(tmp_path / "absent")


weights = st.one_of(
    st.lists(st.floats(0.01, 100.0), min_size=3, max_size=3).map(WeightMatrix.diagonal),
    st.lists(st.floats(-3.0, 3.0), min_size=9, max_size=9).map(
        lambda v: WeightMatrix((np.reshape(v, (3, 3)) @ np.reshape(v, (3, 3)).T + np.eye(3)).tolist())),
)
probs = st.floats(0.0, 1.0, exclude_min=True, exclude_max=True)


@st.composite
def land_params(draw):
    s1 = StageParams(draw(st.integers(4, 200)), draw(weights), draw(st.floats(0.5, 0.99)))
    k2 = draw(st.integers(1, int(s1.k * s1.p - 1e-6)))
    s2 = StageParams(k2, draw(weights), draw(probs))
    return LandParams(s1, s2, StageParams(draw(st.integers(1, 200)), draw(weights), draw(probs)))


@given(st.dictionaries(st.sampled_from(list(LandSurfaceClass)), land_params(), min_size=1))
@settings(max_examples=40, deadline=None)
def test_params_round_trip(params):
    assert config.parse_params(config.format_params(params), 3) == params


def test_params_incomplete():
    with pytest.raises(ConfigError, match="lacks"):
        config.parse_params("snow.stage1.k = 5\n", 13)
    with pytest.raises(ConfigError):
        config.parse_params("", 13)
    with pytest.raises(ConfigError, match="unknown key"):
        config.parse_params("ocean.stage1.k = 5\n", 13)
