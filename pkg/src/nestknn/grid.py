"""Gridded phase-probability maps, zonal means and seasonal composites.

Cells store integer accumulators (twice the sum of phase indices, and the
count), so merging partial grids is exact and independent of order.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import numpy as np

from . import formats
from .core import PhaseLabel
from .errors import FormatError, ValidationError

_HALF_UNITS = {PhaseLabel.LIQUID: 0, PhaseLabel.MIXED: 1, PhaseLabel.SOLID: 2}


class Season(enum.Enum):
    WINTER = "winter"
    SUMMER = "summer"


WINTER_MONTHS = frozenset({11, 12, 1, 2, 3, 4})


def phase_index(phase: PhaseLabel) -> float:
    """Liquid 0, mixed 0.5, solid 1."""
    return _HALF_UNITS[PhaseLabel(phase)] / 2.0


def season_of(timestamp: datetime, window: Optional[tuple[datetime, datetime]] = None,
              strict: bool = False) -> Season:
    if strict and window is not None and not window[0] <= timestamp < window[1]:
        raise ValidationError(f"timestamp {timestamp.isoformat()} outside the study window")
    return Season.WINTER if timestamp.month in WINTER_MONTHS else Season.SUMMER


class GeoDetection(NamedTuple):
    sample_id: int
    latitude: float
    longitude: float
    timestamp: datetime
    precipitating: bool
    phase: Optional[PhaseLabel]


def cell_of(latitude: float, longitude: float, cell: float) -> tuple[int, int]:
    """(row, col) with row = floor((lat + 90) / cell), col = floor((lon + 180) / cell)."""
    if not (math.isfinite(latitude) and -90.0 <= latitude <= 90.0):
        raise ValidationError(f"latitude {latitude} outside [-90, 90]")
    if not (math.isfinite(longitude) and -180.0 <= longitude < 180.0):
        raise ValidationError(f"longitude {longitude} outside [-180, 180)")
    n_rows = int(round(180.0 / cell))
    n_cols = int(round(360.0 / cell))
    row = min(int(math.floor((latitude + 90.0) / cell)), n_rows - 1)
    col = min(int(math.floor((longitude + 180.0) / cell)), n_cols - 1)
    return row, col


@dataclass
class PhaseGrid:
    """Sparse global lat-lon grid of (2 * sum of indices, count) per cell.

    `quantity` is "phase" (phase index of precipitating detections) or
    "occurrence" (1 for precipitating, 0 for clear, over all detections).
    """

    cell: float = 0.1
    season: Optional[str] = None
    quantity: str = "phase"
    cells: dict = field(default_factory=dict)

    def add(self, latitude, longitude, half_units: int) -> None:
        key = cell_of(latitude, longitude, self.cell)
        s, n = self.cells.get(key, (0, 0))
        self.cells[key] = (s + half_units, n + 1)

    def mean(self, key) -> Optional[float]:
        s, n = self.cells.get(key, (0, 0))
        return s / (2.0 * n) if n else None

    def count(self, key) -> int:
        return self.cells.get(key, (0, 0))[1]

    def cell_center(self, key) -> tuple[float, float]:
        row, col = key
        return -90.0 + (row + 0.5) * self.cell, -180.0 + (col + 0.5) * self.cell

    def same_geometry(self, other: "PhaseGrid") -> bool:
        return self.cell == other.cell and self.quantity == other.quantity

    def merge(self, other: "PhaseGrid") -> "PhaseGrid":
        if not self.same_geometry(other):
            raise ValidationError("cannot merge grids with different geometry")
        out = dict(self.cells)
        for key, (s, n) in other.cells.items():
            s0, n0 = out.get(key, (0, 0))
            out[key] = (s0 + s, n0 + n)
        season = self.season if self.season == other.season else None
        return PhaseGrid(self.cell, season, self.quantity, out)

    def __eq__(self, other):
        if not isinstance(other, PhaseGrid):
            return NotImplemented
        return (self.cell == other.cell and self.season == other.season
                and self.quantity == other.quantity and self.cells == other.cells)


def grid_accumulate(detections: Iterable[GeoDetection], cell: float = 0.1,
                    season: Optional[Season] = None, quantity: str = "phase") -> PhaseGrid:
    """Accumulate detections into cells, optionally keeping one season only."""
    if quantity not in ("phase", "occurrence"):
        raise ValidationError(f"unknown grid quantity {quantity!r}")
    grid = PhaseGrid(cell, season.value if season else None, quantity)
    for d in detections:
        if season is not None and season_of(d.timestamp) is not season:
            continue
        if quantity == "phase":
            if not d.precipitating:
                continue
            grid.add(d.latitude, d.longitude, _HALF_UNITS[d.phase])
        else:
            grid.add(d.latitude, d.longitude, 2 if d.precipitating else 0)
    return grid


def merge_grids(grids: Iterable[PhaseGrid]) -> PhaseGrid:
    grids = list(grids)
    if not grids:
        raise ValidationError("nothing to merge")
    out = grids[0]
    for g in grids[1:]:
        out = out.merge(g)
    return out


def grid_accumulate_sharded(detections, cell: float = 0.1, season: Optional[Season] = None,
                            quantity: str = "phase", workers: int = 1) -> PhaseGrid:
    """Accumulate `workers` contiguous shards concurrently and merge them."""
    from concurrent.futures import ThreadPoolExecutor

    detections = list(detections)
    if workers <= 1:
        return grid_accumulate(detections, cell, season, quantity)
    bounds = np.linspace(0, len(detections), workers + 1).astype(int)
    shards = [detections[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda s: grid_accumulate(s, cell, season, quantity), shards))
    return merge_grids(parts)


class ZonalBand(NamedTuple):
    center: float
    mean: float
    count: int


def zonal_mean(grid: PhaseGrid, band: float = 1.0) -> list[ZonalBand]:
    """Count-weighted mean of every latitude band holding data, south to north."""
    n_bands = int(round(180.0 / band))
    sums = [0] * n_bands
    counts = [0] * n_bands
    for key, (s, n) in grid.cells.items():
        lat, _ = grid.cell_center(key)
        b = min(int(math.floor((lat + 90.0) / band)), n_bands - 1)
        sums[b] += s
        counts[b] += n
    return [ZonalBand(-90.0 + (b + 0.5) * band, sums[b] / (2.0 * counts[b]), counts[b])
            for b in range(n_bands) if counts[b]]


def grid_difference(g1: PhaseGrid, g2: PhaseGrid) -> dict:
    """Per-cell mean difference g1 - g2 where both grids have data."""
    if not g1.same_geometry(g2):
        raise ValidationError("grid geometry mismatch")
    return {key: g1.mean(key) - g2.mean(key)
            for key in sorted(set(g1.cells) & set(g2.cells))}


# ---------------------------------------------------------------- files

def write_grid_text(path, grid: PhaseGrid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("lat", "lon", "mean", "count"))
        for key in sorted(grid.cells):
            lat, lon = grid.cell_center(key)
            w.writerow((repr(lat), repr(lon), repr(grid.mean(key)), grid.count(key)))


def write_zonal_text(path, bands) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("band_center", "mean", "count"))
        for b in bands:
            w.writerow((repr(b.center), repr(b.mean), b.count))


_CELL_DTYPE = np.dtype([("row", "<i4"), ("col", "<i4"), ("half_sum", "<i8"), ("count", "<i8")])


def grid_bytes(grid: PhaseGrid) -> bytes:
    keys = sorted(grid.cells)
    rec = np.zeros(len(keys), dtype=_CELL_DTYPE)
    for i, key in enumerate(keys):
        rec[i] = (key[0], key[1], *grid.cells[key])
    meta = json.dumps({"cell_deg": grid.cell, "season": grid.season, "quantity": grid.quantity},
                      sort_keys=True).encode()
    return formats.pack_envelope(formats.KIND_GRID, [(b"META", meta), (b"GRID", rec.tobytes())])


def write_grid_binary(path, grid: PhaseGrid) -> None:
    Path(path).write_bytes(grid_bytes(grid))


def read_grid_binary(path) -> PhaseGrid:
    sections = formats.unpack_envelope(Path(path).read_bytes(), formats.KIND_GRID)
    try:
        meta = json.loads(sections[b"META"])
        blob = sections[b"GRID"]
    except KeyError as exc:
        raise FormatError(f"grid file lacks section {exc.args[0]!r}") from None
    if len(blob) % _CELL_DTYPE.itemsize:
        raise formats.TruncatedFileError("grid section is not a whole number of cells")
    rec = np.frombuffer(blob, dtype=_CELL_DTYPE)
    cells = {(int(r), int(c)): (int(s), int(n)) for r, c, s, n in rec.tolist()}
    return PhaseGrid(meta["cell_deg"], meta["season"], meta["quantity"], cells)
