"""Detection files and stratified verification reports.

Reports hold one row per (surface group, detection class). Surface groups
are all, ground, wet snow, dry snow, and dry snow split by the share of dry
snow samples within each 1 degree cell. Phase classes are scored only on
samples where both truth and detection are precipitating, so that phase
errors are not confounded with occurrence errors.
"""

from __future__ import annotations

import csv
import math
from datetime import datetime
from typing import Iterable, NamedTuple, Optional, Sequence

from .core import LandSurfaceClass, MatchedSample, PhaseLabel, Query
from .database import AnalysisSurfaceClass, analysis_surface_class
from .detector import Detection, StageVotes
from .errors import FormatError, UndefinedMetricError, ValidationError
from .grid import GeoDetection
from .metrics import contingency, hss, pod, pofa

DETECTION_COLUMNS = (
    "sample_id", "land", "precipitating", "phase", "latitude", "longitude", "timestamp",
    "k1", "n_p", "k2", "n_l", "n_s", "n_m", "k3", "n_s3", "n_m3",
)

DRY_SNOW_BANDS = ((0.0, 0.10), (0.10, 0.25), (0.25, 0.45), (0.45, 0.70), (0.70, 1.00))
BAND_CELL_DEG = 1.0

CLASSES = ("occurrence", "liquid", "mixed", "solid")


def _votes_fields(det: Detection):
    out = [""] * 9
    out[0], out[1] = det.stage_votes[0].k, det.stage_votes[0].counts[0]
    if len(det.stage_votes) > 1:
        v = det.stage_votes[1]
        out[2:6] = [v.k, *v.counts]
    if len(det.stage_votes) > 2:
        v = det.stage_votes[2]
        out[6:9] = [v.k, *v.counts]
    return out


def write_detections(path, detections: Sequence[Detection], queries: Sequence[Query]) -> None:
    """One row per detection; geolocation is copied from the matching query."""
    if len(detections) != len(queries):
        raise ValidationError("detections and queries differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_COLUMNS)
        for d, q in zip(detections, queries):
            if d.sample_id != q.sample_id:
                raise ValidationError(f"detection {d.sample_id} paired with query {q.sample_id}")
            w.writerow((d.sample_id, d.land_class.name.lower(), int(d.precipitating),
                        "" if d.phase is None else d.phase.name.lower(),
                        repr(float(q.latitude)), repr(float(q.longitude)), q.timestamp.isoformat(),
                        *_votes_fields(d)))


class DetectionRow(NamedTuple):
    detection: Detection
    latitude: float
    longitude: float
    timestamp: datetime

    def geo(self) -> GeoDetection:
        d = self.detection
        return GeoDetection(d.sample_id, self.latitude, self.longitude, self.timestamp,
                            d.precipitating, d.phase)


def _stage_votes(fields):
    k1, n_p, k2, n_l, n_s, n_m, k3, s3, m3 = fields
    votes = [StageVotes(int(k1), (int(n_p),), math.nan)]
    if k2:
        votes.append(StageVotes(int(k2), (int(n_l), int(n_s), int(n_m)), math.nan))
    if k3:
        votes.append(StageVotes(int(k3), (int(s3), int(m3)), math.nan))
    return tuple(votes)


def read_detections(path) -> list[DetectionRow]:
    """Read a detection file. Vote thresholds are not stored and come back as NaN."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(header) != DETECTION_COLUMNS:
            raise FormatError(f"{path}: unexpected detection columns")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(DETECTION_COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected {len(DETECTION_COLUMNS)} fields")
            try:
                det = Detection(int(row[0]), row[2] == "1",
                                PhaseLabel[row[3].upper()] if row[3] else None,
                                _stage_votes(row[7:]), LandSurfaceClass[row[1].upper()])
                out.append(DetectionRow(det, float(row[4]), float(row[5]),
                                        datetime.fromisoformat(row[6])))
            except (ValueError, KeyError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def dry_snow_share(truth: Iterable[MatchedSample], cell: float = BAND_CELL_DEG) -> dict:
    """Fraction of samples classed as dry snow in each (row, col) cell."""
    counts: dict = {}
    for s in truth:
        key = (math.floor((s.latitude + 90.0) / cell), math.floor((s.longitude + 180.0) / cell))
        dry, n = counts.get(key, (0, 0))
        counts[key] = (dry + (analysis_surface_class(s) is AnalysisSurfaceClass.DRY_SNOW), n + 1)
    return {key: dry / n for key, (dry, n) in counts.items()}


def band_of(share: float) -> int:
    """Index into DRY_SNOW_BANDS; bands are [lo, hi) except the last, which is closed."""
    for i, (_, hi) in enumerate(DRY_SNOW_BANDS):
        if share < hi:
            return i
    return len(DRY_SNOW_BANDS) - 1


def band_name(i: int) -> str:
    lo, hi = DRY_SNOW_BANDS[i]
    return f"dry_snow_{lo:.2f}-{hi:.2f}"


def surface_groups(truth: Sequence[MatchedSample]) -> dict[int, tuple[str, ...]]:
    """sample_id -> names of every surface group the sample belongs to."""
    share = dry_snow_share(truth)
    out = {}
    for s in truth:
        surf = analysis_surface_class(s)
        names = ["all", surf.name.lower()]
        if surf is AnalysisSurfaceClass.DRY_SNOW:
            key = (math.floor((s.latitude + 90.0) / BAND_CELL_DEG),
                   math.floor((s.longitude + 180.0) / BAND_CELL_DEG))
            names.append(band_name(band_of(share[key])))
        out[s.sample_id] = tuple(names)
    return out


GROUP_ORDER = ("all", "ground", "wet_snow", "dry_snow",
               *(band_name(i) for i in range(len(DRY_SNOW_BANDS))))


class ReportRow(NamedTuple):
    surface: str
    detection_class: str
    n: int
    a: int
    b: int
    c: int
    d: int
    pod: Optional[float]
    pofa: Optional[float]
    hss: Optional[float]


def _safe(fn, table):
    try:
        return fn(table)
    except UndefinedMetricError:
        return None


def evaluate(detections: Sequence[Detection], truth: Sequence[MatchedSample]) -> list[ReportRow]:
    """Stratified scores; metrics with a zero denominator are None.

    Every detection must have a truth sample with the same id and every
    precipitating truth sample must carry a REF phase.
    """
    by_id = {s.sample_id: s for s in truth}
    if len(by_id) != len(truth):
        raise ValidationError("duplicate sample ids in truth")
    pairs = []
    for det in detections:
        s = by_id.get(det.sample_id)
        if s is None:
            raise ValidationError(f"no truth for sample_id {det.sample_id}")
        if s.rate > 0 and s.ref_phase is None:
            raise ValidationError(f"truth sample {s.sample_id} is precipitating without a REF phase")
        pairs.append((det, s))
    groups = surface_groups([s for _, s in pairs])
    rows = []
    for group in GROUP_ORDER:
        sel = [(d, s) for d, s in pairs if group in groups[s.sample_id]]
        if not sel:
            continue
        for cls in CLASSES:
            if cls == "occurrence":
                pred = [d.precipitating for d, _ in sel]
                obs = [s.rate > 0 for _, s in sel]
            else:
                phase = PhaseLabel[cls.upper()]
                both = [(d, s) for d, s in sel if d.precipitating and s.rate > 0]
                pred = [d.phase is phase for d, _ in both]
                obs = [s.ref_phase is phase for _, s in both]
            if not pred:
                rows.append(ReportRow(group, cls, 0, 0, 0, 0, 0, None, None, None))
                continue
            t = contingency(pred, obs)
            rows.append(ReportRow(group, cls, t.total, t.a, t.b, t.c, t.d,
                                  _safe(pod, t), _safe(pofa, t), _safe(hss, t)))
    return rows


def find_row(rows: Iterable[ReportRow], surface: str, detection_class: str) -> ReportRow:
    for r in rows:
        if r.surface == surface and r.detection_class == detection_class:
            return r
    raise KeyError((surface, detection_class))


def write_report(path, rows: Iterable[ReportRow]) -> None:
    """Delimited report; undefined metrics are written as ``undefined``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ReportRow._fields)
        for r in rows:
            w.writerow((*r[:7], *("undefined" if v is None else repr(v) for v in r[7:])))

