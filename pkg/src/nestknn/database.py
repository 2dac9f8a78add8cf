"""A-priori database construction: REF phase labelling, snow stratification,
intensity binning, balanced reservoir subsampling and persistence."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import formats
from .core import (
    AtmosphericClass,
    DEFAULT_CHANNEL_ORDER,
    LandSurfaceClass,
    MatchedSample,
    PhaseLabel,
    land_class_of,
    validate_sample,
)
from .errors import FormatError, StratumShortfallError, ValidationError

FREEZING_K = 273.15
BIN_CENTERS = (0.5, 1.0, 2.0, 4.0, 8.0)
REMAINDER_ORDER = (AtmosphericClass.LIQUID, AtmosphericClass.SOLID, AtmosphericClass.MIXED)


class AnalysisSurfaceClass(enum.IntEnum):
    GROUND = 1
    WET_SNOW = 2
    DRY_SNOW = 3


class SnowWetness(enum.Enum):
    DRY = "dry"
    WET = "wet"
    INDETERMINATE = "indeterminate"


def merge_ref_phase(active_phase: PhaseLabel, passive_prob: float, threshold: float = 0.5) -> PhaseLabel:
    """Combine the radar phase with the discretised radiometer phase probability.

    The radiometer probability runs from 0 (solid) to 1 (liquid) and is
    discretised as solid below `threshold`, liquid otherwise. Agreement gives
    that phase; any disagreement (including a mixed radar phase) gives MIXED.
    """
    if not 0.0 <= passive_prob <= 1.0 or math.isnan(passive_prob):
        raise ValidationError(f"passive phase probability {passive_prob} outside [0, 1]")
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"discretisation threshold {threshold} outside (0, 1)")
    passive = PhaseLabel.SOLID if passive_prob < threshold else PhaseLabel.LIQUID
    if active_phase == passive:
        return passive
    return PhaseLabel.MIXED


def snow_pixel_fraction(pixel_fractions: Sequence[float]) -> float:
    """Fraction of pixels whose snow-cover fraction is above zero."""
    px = np.asarray(pixel_fractions, dtype=np.float64)
    if px.size == 0:
        raise ValidationError("no snow-cover pixels supplied")
    if np.any((px < 0) | (px > 1)) or not np.all(np.isfinite(px)):
        raise ValidationError("pixel snow fractions must lie in [0, 1]")
    return float(np.count_nonzero(px > 0)) / px.size


def classify_snow_cover(pixel_fractions: Sequence[float]) -> bool:
    """True when strictly more than half the enclosed pixels indicate snow."""
    snow_pixel_fraction(pixel_fractions)  # validation
    flagged = np.count_nonzero(np.asarray(pixel_fractions, dtype=np.float64) > 0)
    return 2 * flagged > len(pixel_fractions)


def classify_snow_wetness(skin_temp: float, air_temp: float) -> SnowWetness:
    if not (math.isfinite(skin_temp) and math.isfinite(air_temp)):
        raise ValidationError("skin and air temperatures must be finite")
    if skin_temp < FREEZING_K and air_temp < FREEZING_K:
        return SnowWetness.DRY
    if skin_temp > FREEZING_K and air_temp > FREEZING_K:
        return SnowWetness.WET
    return SnowWetness.INDETERMINATE


def analysis_surface_class(sample) -> AnalysisSurfaceClass:
    """Ground, wet snow or dry snow; straddling temperatures count as wet."""
    if land_class_of(sample.snow_fraction) is LandSurfaceClass.NO_SNOW:
        return AnalysisSurfaceClass.GROUND
    if classify_snow_wetness(sample.skin_temp, sample.air_temp) is SnowWetness.DRY:
        return AnalysisSurfaceClass.DRY_SNOW
    return AnalysisSurfaceClass.WET_SNOW


@dataclass(frozen=True)
class IntensityBin:
    index: int
    center: float
    lower: float
    upper: float


INTENSITY_BINS = tuple(
    IntensityBin(i + 1, c, c * 2.0 ** -0.5, c * 2.0 ** 0.5) for i, c in enumerate(BIN_CENTERS)
)


def assign_intensity_bin(rate: float) -> IntensityBin:
    """Base-2 logarithmic bin of a positive rate; out-of-range rates clamp."""
    if not rate > 0:
        raise ValidationError(f"intensity binning needs rate > 0, got {rate}")
    chosen = INTENSITY_BINS[0]
    for b in INTENSITY_BINS[1:]:
        if rate >= b.lower:
            chosen = b
    return chosen


def label_ref_phase(sample: MatchedSample, threshold: float = 0.5) -> Optional[MatchedSample]:
    """Fill `ref_phase` for a precipitating sample from its active/passive phases.

    Returns None when the sample cannot be labelled (one phase source missing).
    Samples that already carry a REF phase, and clear-sky samples, pass through.
    """
    if sample.rate == 0 or sample.ref_phase is not None:
        return sample
    if sample.active_phase is None or sample.passive_phase_prob is None:
        return None
    return replace(sample, ref_phase=merge_ref_phase(sample.active_phase,
                                                     sample.passive_phase_prob, threshold))


def stratify(sample: MatchedSample) -> tuple[LandSurfaceClass, AtmosphericClass]:
    return land_class_of(sample.snow_fraction), sample.atmospheric_class


def stratum_quotas(M: int) -> dict[AtmosphericClass, int]:
    """Per-land-class quota: half clear sky, the rest split over phases with
    the remainder handed out in the order liquid, solid, mixed."""
    if M < 1:
        raise ValidationError(f"database size M must be positive, got {M}")
    clear = M // 2
    precip = M - clear
    base, rem = divmod(precip, 3)
    quotas = {AtmosphericClass.CLEAR_SKY: clear}
    for i, atm in enumerate(REMAINDER_ORDER):
        quotas[atm] = base + (1 if i < rem else 0)
    return quotas


@dataclass(frozen=True)
class AprioriDatabase:
    channel_order: tuple
    strata: Mapping[LandSurfaceClass, tuple]
    metadata: Mapping = field(default_factory=dict)

    @property
    def channel_count(self) -> int:
        return len(self.channel_order)

    def samples(self, land: LandSurfaceClass) -> tuple:
        try:
            return self.strata[land]
        except KeyError:
            raise ValidationError(f"database has no stratum for land class {land.name}") from None

    def all_ids(self) -> frozenset:
        return frozenset(s.sample_id for stratum in self.strata.values() for s in stratum)

    def stratum_counts(self) -> dict[tuple[LandSurfaceClass, AtmosphericClass], int]:
        counts = {}
        for land, stratum in self.strata.items():
            for s in stratum:
                key = (land, s.atmospheric_class)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def __eq__(self, other):
        if not isinstance(other, AprioriDatabase):
            return NotImplemented
        return (self.channel_order == other.channel_order
                and dict(self.strata) == dict(other.strata)
                and dict(self.metadata) == dict(other.metadata))

    __hash__ = None


def build_balanced_database(
    samples: Iterable[MatchedSample],
    M: int,
    seed: int,
    channel_order: Sequence[str] = DEFAULT_CHANNEL_ORDER,
    ref_threshold: float = 0.5,
    created: Optional[str] = None,
) -> AprioriDatabase:
    """Reservoir-sample each (land, atmosphere) stratum down to its quota.

    Each stratum draws from its own PCG64 stream seeded with
    ``(seed, land, atmosphere)``, so the result depends only on the seed and
    the order of samples within each stratum. Selected samples are stored
    sorted by sample_id.

    `created` defaults to the latest input timestamp so that identical
    inputs produce identical files.
    """
    channel_order = tuple(channel_order)
    n_ch = len(channel_order)
    quotas = stratum_quotas(M)
    reservoirs: dict = {}
    seen: dict = {}
    rngs: dict = {}
    ids = set()
    excluded = 0
    latest = None
    for raw in samples:
        s = label_ref_phase(raw, ref_threshold)
        if s is None:
            excluded += 1
            continue
        validate_sample(s, n_ch)
        if s.sample_id in ids:
            raise ValidationError(f"duplicate sample_id {s.sample_id}")
        ids.add(s.sample_id)
        if latest is None or s.timestamp > latest:
            latest = s.timestamp
        key = stratify(s)
        quota = quotas[key[1]]
        i = seen.get(key, 0)
        seen[key] = i + 1
        res = reservoirs.setdefault(key, [])
        if i < quota:
            res.append(s)
            continue
        rng = rngs.get(key)
        if rng is None:
            rng = rngs[key] = np.random.Generator(np.random.PCG64([seed, int(key[0]), int(key[1])]))
        j = int(rng.integers(0, i + 1))
        if j < quota:
            res[j] = s

    shortfalls = [
        (land, atm, seen.get((land, atm), 0), quotas[atm])
        for land in LandSurfaceClass for atm in AtmosphericClass
        if seen.get((land, atm), 0) < quotas[atm]
    ]
    if shortfalls:
        raise StratumShortfallError(shortfalls)

    strata = {}
    for land in LandSurfaceClass:
        members = [s for atm in AtmosphericClass for s in reservoirs[(land, atm)]]
        strata[land] = tuple(sorted(members, key=lambda s: s.sample_id))
    metadata = {
        "format_version": formats.FORMAT_VERSION,
        "seed": int(seed),
        "M": int(M),
        "ref_threshold": float(ref_threshold),
        "created": created if created is not None else (latest.isoformat() if latest else ""),
        "excluded_unlabelled": excluded,
        "source_counts": {f"{land.name}/{atm.name}": seen.get((land, atm), 0)
                          for land in LandSurfaceClass for atm in AtmosphericClass},
    }
    return AprioriDatabase(channel_order, strata, metadata)


def _stratum_tag(land: LandSurfaceClass, atm: AtmosphericClass) -> bytes:
    return f"L{int(land)}A{int(atm)}".encode()


def database_bytes(db: AprioriDatabase) -> bytes:
    meta = dict(db.metadata)
    meta["channel_order"] = list(db.channel_order)
    sections = [(b"META", json.dumps(meta, sort_keys=True).encode())]
    for land in sorted(db.strata):
        for atm in AtmosphericClass:
            members = [s for s in db.strata[land] if s.atmospheric_class is atm]
            rec = formats.samples_to_records(members, db.channel_count)
            sections.append((_stratum_tag(land, atm), rec.tobytes()))
    return formats.pack_envelope(formats.KIND_DATABASE, sections)


def persist_database(db: AprioriDatabase, path) -> None:
    Path(path).write_bytes(database_bytes(db))


def load_database(path) -> AprioriDatabase:
    sections = formats.unpack_envelope(Path(path).read_bytes(), formats.KIND_DATABASE)
    if b"META" not in sections:
        raise FormatError("database file lacks a META section")
    meta = json.loads(sections.pop(b"META"))
    order = tuple(meta.pop("channel_order"))
    dt = formats.record_dtype(len(order))
    grouped: dict = {}
    for tag, blob in sections.items():
        text = tag.decode("ascii", "replace")
        if not (text[0] == "L" and text[2] == "A"):
            continue
        land = LandSurfaceClass(int(text[1]))
        if len(blob) % dt.itemsize:
            raise formats.TruncatedFileError(f"stratum {text} is not a whole number of records")
        grouped.setdefault(land, []).extend(formats.records_to_samples(np.frombuffer(blob, dtype=dt)))
    strata = {land: tuple(sorted(v, key=lambda s: s.sample_id)) for land, v in sorted(grouped.items())}
    return AprioriDatabase(order, strata, meta)
