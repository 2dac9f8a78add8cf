import random

import pytest
from hypothesis import given, settings, strategies as st

from nestknn import grid
from nestknn.core import PhaseLabel, utc
from nestknn.errors import ValidationError
from nestknn.grid import GeoDetection, PhaseGrid, Season, cell_of, grid_accumulate, merge_grids, zonal_mean


def det(lat, lon, phase=PhaseLabel.SOLID, ts=None, i=0):
    return GeoDetection(i, lat, lon, ts or utc(2016, 1, 15), phase is not None, phase)


@pytest.mark.parametrize("phase,value", [(PhaseLabel.LIQUID, 0.0), (PhaseLabel.MIXED, 0.5), (PhaseLabel.SOLID, 1.0)])
def test_phase_index(phase, value):
    assert grid.phase_index(phase) == value


@pytest.mark.parametrize("ts,season", [
    (utc(2016, 1, 15), Season.WINTER), (utc(2015, 7, 1), Season.SUMMER),
    (utc(2015, 11, 1), Season.WINTER), (utc(2016, 4, 30), Season.WINTER), (utc(2016, 5, 1), Season.SUMMER),
])
def test_season(ts, season):
    assert grid.season_of(ts) is season


def test_strict_window():
    window = (utc(2015, 6, 1), utc(2016, 6, 1))
    assert grid.season_of(utc(2015, 12, 1), window, strict=True) is Season.WINTER
    with pytest.raises(ValidationError):
        grid.season_of(utc(2017, 1, 1), window, strict=True)


def test_cell_indices():
    assert cell_of(89.99, 0.0, 0.1)[0] == 1799
    assert cell_of(90.0, 0.0, 0.1)[0] == 1799
    assert cell_of(-90.0, -180.0, 0.1) == (0, 0)
    assert cell_of(0.05, 179.99, 0.1) == (900, 3599)
    with pytest.raises(ValidationError):
        cell_of(0.0, 180.0, 0.1)


def test_cell_means():
    g = grid_accumulate([det(10.01, 20.01)])
    assert len(g.cells) == 1 and g.mean(next(iter(g.cells))) == 1.0
    g = grid_accumulate([det(10.01, 20.01), det(10.02, 20.03, PhaseLabel.LIQUID)])
    key = next(iter(g.cells))
    assert g.mean(key) == 0.5 and g.count(key) == 2
    assert g.mean((0, 0)) is None and g.count((0, 0)) == 0


def test_clear_detections_skipped_for_phase():
    g = grid_accumulate([det(10.0, 20.0, None)])
    assert g.cells == {}
    g = grid_accumulate([det(10.0, 20.0, None), det(10.0, 20.0)], quantity="occurrence")
    assert g.mean(next(iter(g.cells))) == 0.5


def test_season_filter():
    ds = [det(0, 0, ts=utc(2016, 1, 1)), det(0, 0, PhaseLabel.LIQUID, ts=utc(2015, 7, 1))]
    assert grid_accumulate(ds, season=Season.WINTER).mean(cell_of(0, 0, 0.1)) == 1.0
    assert grid_accumulate(ds, season=Season.SUMMER).mean(cell_of(0, 0, 0.1)) == 0.0


def test_zonal_uniform_and_empty():
    ds = [det(lat, lon, PhaseLabel.MIXED) for lat in (-40.5, 10.5, 60.5) for lon in (-100, 0, 100)]
    bands = zonal_mean(grid_accumulate(ds, cell=1.0), band=1.0)
    assert [b.center for b in bands] == [-40.5, 10.5, 60.5]
    assert all(b.mean == 0.5 for b in bands)


def test_zonal_weighted():
    ds = [det(10.2, 0.0)] * 3 + [det(10.7, 50.0, PhaseLabel.LIQUID)] + [det(-5.5, 0.0, PhaseLabel.MIXED)]
    bands = zonal_mean(grid_accumulate(ds, cell=0.5), band=1.0)
    by_centre = {b.center: b for b in bands}
    assert by_centre[10.5].mean == (3 * 1.0 + 0.0) / 4 and by_centre[10.5].count == 4
    assert by_centre[-5.5].mean == 0.5


def test_difference():
    a = grid_accumulate([det(0.5, 0.5), det(0.5, 1.5, PhaseLabel.LIQUID), det(1.5, 0.5)], cell=1.0)
    b = grid_accumulate([det(0.5, 0.5, PhaseLabel.MIXED), det(0.5, 1.5, PhaseLabel.MIXED)], cell=1.0)
    diff = grid.grid_difference(a, b)
    assert diff == {cell_of(0.5, 0.5, 1.0): 0.5, cell_of(0.5, 1.5, 1.0): -0.5}
    assert set(grid.grid_difference(a, a).values()) == {0.0}


def test_geometry_mismatch():
    with pytest.raises(ValidationError):
        PhaseGrid(0.1).merge(PhaseGrid(0.5))


def _random_detections(seed, n=2000):
    rng = random.Random(seed)
    phases = [PhaseLabel.LIQUID, PhaseLabel.MIXED, PhaseLabel.SOLID, None]
    return [det(rng.uniform(-90, 90), rng.uniform(-180, 179.99), rng.choice(phases),
                utc(2015, rng.randint(1, 12), 1), i) for i in range(n)]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_merge_is_exact(seed, parts):
    ds = _random_detections(seed, 500)
    rng = random.Random(seed)
    cuts = sorted(rng.randint(0, len(ds)) for _ in range(parts - 1))
    shards = [ds[a:b] for a, b in zip([0, *cuts], [*cuts, len(ds)])]
    partial = [grid_accumulate(s, cell=5.0) for s in shards]
    rng.shuffle(partial)
    assert merge_grids(partial) == grid_accumulate(ds, cell=5.0)


def test_sharded_matches_single():
    ds = _random_detections(1)
    assert grid.grid_accumulate_sharded(ds, 1.0, workers=8) == grid_accumulate(ds, 1.0)


def test_means_in_unit_interval():
    g = grid_accumulate(_random_detections(2), cell=10.0)
    assert all(0 <= g.mean(k) <= 1 for k in g.cells)


def test_files(tmp_path):
    g = grid_accumulate(_random_detections(3), cell=2.0, season=Season.WINTER)
    grid.write_grid_binary(tmp_path / "g.apdb", g)
    assert grid.read_grid_binary(tmp_path / "g.apdb") == g
    grid.write_grid_text(tmp_path / "g.csv", g)
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "lat,lon,mean,count" and len(lines) == len(g.cells) + 1
    grid.write_zonal_text(tmp_path / "z.csv", zonal_mean(g, 1.0))
    assert (tmp_path / "z.csv").read_text().startswith("band_center,mean,count\n")
