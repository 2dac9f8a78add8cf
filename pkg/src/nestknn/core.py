"""Shared domain types, label enumerations and validation rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

DEFAULT_CHANNEL_COUNT = 13
DEFAULT_CHANNEL_ORDER = (
    "10V", "10H", "19V", "19H", "23V", "37V", "37H",
    "89V", "89H", "166V", "166H", "183+-3V", "183+-7V",
)
TB_MIN_K = 50.0
TB_MAX_K = 350.0


class PhaseLabel(enum.IntEnum):
    """Precipitation phase. Values match the atmospheric class index."""

    LIQUID = 2
    SOLID = 3
    MIXED = 4


class AtmosphericClass(enum.IntEnum):
    CLEAR_SKY = 1
    LIQUID = 2
    SOLID = 3
    MIXED = 4

    @classmethod
    def from_phase(cls, phase: Optional[PhaseLabel]) -> "AtmosphericClass":
        if phase is None:
            return cls.CLEAR_SKY
        return cls(int(phase))

    @property
    def phase(self) -> Optional[PhaseLabel]:
        if self is AtmosphericClass.CLEAR_SKY:
            return None
        return PhaseLabel(int(self))


class LandSurfaceClass(enum.IntEnum):
    SNOW_COVERED = 1
    NO_SNOW = 2


PRECIPITATING = (AtmosphericClass.LIQUID, AtmosphericClass.SOLID, AtmosphericClass.MIXED)


def validate_channel_vector(values: Sequence[float], channel_count: int) -> tuple:
    """Return `values` as a tuple of floats, raising if the vector is implausible."""
    tb = tuple(float(v) for v in values)
    if len(tb) != channel_count:
        raise ValidationError(
            f"channel vector has length {len(tb)}, expected {channel_count}"
        )
    for i, v in enumerate(tb):
        if not math.isfinite(v):
            raise ValidationError(f"channel {i} is not finite ({v})")
        if not TB_MIN_K <= v <= TB_MAX_K:
            raise ValidationError(
                f"channel {i} brightness temperature {v} K outside [{TB_MIN_K}, {TB_MAX_K}]"
            )
    return tb


@dataclass(frozen=True)
class MatchedSample:
    """One database record: brightness temperatures plus ancillary truth.

    `snow_fraction` is the fraction of enclosed high-resolution pixels that
    indicate snow (see :func:`nestknn.database.snow_pixel_fraction`).
    """

    sample_id: int
    tb: tuple
    rate: float
    snow_fraction: float
    skin_temp: float
    air_temp: float
    latitude: float
    longitude: float
    timestamp: datetime
    active_phase: Optional[PhaseLabel] = None
    passive_phase_prob: Optional[float] = None
    ref_phase: Optional[PhaseLabel] = None

    @property
    def atmospheric_class(self) -> AtmosphericClass:
        return AtmosphericClass.from_phase(self.ref_phase if self.rate > 0 else None)

    @property
    def precipitating(self) -> bool:
        return self.rate > 0

    def as_query(self) -> "Query":
        return Query(self.sample_id, self.tb, self.snow_fraction, self.latitude,
                     self.longitude, self.timestamp)


@dataclass(frozen=True)
class Query:
    """A retrieval input: brightness temperatures and the ancillary fields
    available without truth."""

    sample_id: int
    tb: tuple
    snow_fraction: float
    latitude: float
    longitude: float
    timestamp: datetime


def _check_geo(latitude, longitude):
    if not (math.isfinite(latitude) and -90.0 <= latitude <= 90.0):
        raise ValidationError(f"latitude {latitude} outside [-90, 90]")
    if not (math.isfinite(longitude) and -180.0 <= longitude < 180.0):
        raise ValidationError(f"longitude {longitude} outside [-180, 180)")


def validate_sample(sample: MatchedSample, channel_count: int) -> MatchedSample:
    """Check every MatchedSample invariant; return the sample unchanged.

    Raises
    ------
    ValidationError
        Naming the first invariant that fails.
    """
    validate_channel_vector(sample.tb, channel_count)
    if not isinstance(sample.sample_id, (int, np.integer)) or sample.sample_id < 0:
        raise ValidationError(f"sample_id must be a non-negative integer, got {sample.sample_id!r}")
    if not (math.isfinite(sample.rate) and sample.rate >= 0):
        raise ValidationError(f"sample {sample.sample_id}: rate {sample.rate} must be finite and >= 0")
    if sample.rate > 0 and sample.ref_phase is None:
        raise ValidationError(f"sample {sample.sample_id}: rate {sample.rate} > 0 but ref_phase is absent")
    if sample.rate == 0 and sample.ref_phase is not None:
        raise ValidationError(f"sample {sample.sample_id}: clear-sky sample carries ref_phase {sample.ref_phase.name}")
    if sample.passive_phase_prob is not None and not 0.0 <= sample.passive_phase_prob <= 1.0:
        raise ValidationError(f"sample {sample.sample_id}: passive phase probability outside [0, 1]")
    if not 0.0 <= sample.snow_fraction <= 1.0:
        raise ValidationError(f"sample {sample.sample_id}: snow_fraction {sample.snow_fraction} outside [0, 1]")
    for name in ("skin_temp", "air_temp"):
        if not math.isfinite(getattr(sample, name)):
            raise ValidationError(f"sample {sample.sample_id}: {name} is not finite")
    _check_geo(sample.latitude, sample.longitude)
    if sample.timestamp.tzinfo is None:
        raise ValidationError(f"sample {sample.sample_id}: timestamp must be timezone-aware (UTC)")
    return sample


def validate_query(query: Query, channel_count: int) -> Query:
    validate_channel_vector(query.tb, channel_count)
    if not 0.0 <= query.snow_fraction <= 1.0:
        raise ValidationError(f"query {query.sample_id}: snow_fraction outside [0, 1]")
    _check_geo(query.latitude, query.longitude)
    return query


def land_class_of(snow_fraction: float) -> LandSurfaceClass:
    """Snow covered when strictly more than half the pixels indicate snow."""
    return LandSurfaceClass.SNOW_COVERED if snow_fraction > 0.5 else LandSurfaceClass.NO_SNOW


class WeightMatrix:
    """Symmetric positive semi-definite channel weighting for the quadratic distance.

    Diagonal matrices keep only their diagonal; `entries` materialises the
    full matrix on demand.
    """

    __slots__ = ("_diag", "_full")

    def __init__(self, entries, *, rtol: float = 1e-9):
        a = np.array(entries, dtype=np.float64)
        if a.ndim == 1:
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValidationError("diagonal weights must be finite and non-negative")
            self._diag = a
            self._full = None
        else:
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValidationError(f"weight matrix must be square, got shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValidationError("weight matrix has non-finite entries")
            scale = max(np.abs(a).max(), np.finfo(float).tiny)
            if np.abs(a - a.T).max() > rtol * scale:
                raise ValidationError("weight matrix is not symmetric")
            eig = np.linalg.eigvalsh(a)
            if eig.min() < -rtol * max(eig.max(), 0.0):
                raise ValidationError(
                    f"weight matrix is not positive semi-definite (min eigenvalue {eig.min():.3g})"
                )
            if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
                self._diag = np.diag(a).copy()
                self._full = None
            else:
                self._diag = None
                self._full = a
        for arr in (self._diag, self._full):
            if arr is not None:
                arr.flags.writeable = False

    @classmethod
    def identity(cls, n: int) -> "WeightMatrix":
        return cls(np.ones(n))

    @classmethod
    def diagonal(cls, weights) -> "WeightMatrix":
        return cls(np.asarray(weights, dtype=np.float64).ravel())

    @property
    def is_diagonal(self) -> bool:
        return self._diag is not None

    @property
    def dim(self) -> int:
        return len(self._diag) if self._diag is not None else self._full.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return self._diag if self._diag is not None else np.diag(self._full)

    @property
    def entries(self) -> np.ndarray:
        if self._full is not None:
            return self._full
        return np.diag(self._diag)

    def scaled(self, factor: float) -> "WeightMatrix":
        if self._diag is not None:
            return WeightMatrix(self._diag * factor)
        return WeightMatrix(self._full * factor)

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return self.is_diagonal == other.is_diagonal and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.is_diagonal, self.entries.tobytes()))

    def __repr__(self):
        if self._diag is not None:
            return f"WeightMatrix.diagonal({self._diag.tolist()})"
        return f"WeightMatrix({self._full.tolist()})"


@dataclass(frozen=True)
class StageParams:
    k: int
    weights: WeightMatrix
    p: float

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ValidationError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 < self.p < 1.0:
            raise ValidationError(f"p must lie strictly between 0 and 1, got {self.p}")


@dataclass(frozen=True)
class ContingencyTable:
    a: int  # hits
    b: int  # false alarms
    c: int  # misses
    d: int  # correct rejections

    def __post_init__(self):
        for name in "abcd":
            v = getattr(self, name)
            if v < 0:
                raise ValidationError(f"contingency count {name} is negative ({v})")

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d

    def __add__(self, other: "ContingencyTable") -> "ContingencyTable":
        return ContingencyTable(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)


def utc(year, month, day, hour=0, minute=0, second=0) -> datetime:
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
