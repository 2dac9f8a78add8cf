"""Labelled synthetic matched samples for desk-scale experiments.

Randomness comes from NumPy's PCG64 bit generator (``numpy.random.PCG64``)
with normals from ``Generator.standard_normal``; both are platform
independent for a given seed. Within one class the draw order is fixed:
channel noise ``(count, channels)``, then log2-uniform rates, then the
ancillary fields in the order they appear in `generate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import timedelta
from typing import NamedTuple, Optional

import numpy as np

from .core import (
    AtmosphericClass,
    DEFAULT_CHANNEL_COUNT,
    LandSurfaceClass,
    MatchedSample,
    PhaseLabel,
    TB_MAX_K,
    TB_MIN_K,
    utc,
)
from .errors import ValidationError

STUDY_START = utc(2015, 6, 1)
STUDY_DAYS = 366


@dataclass(frozen=True)
class ClassSpec:
    land: LandSurfaceClass
    atmosphere: AtmosphericClass
    mean: tuple
    std: tuple
    slope: tuple                       # K per doubling of rate
    intensity: Optional[tuple] = None  # (lo, hi) mm/h, log-uniform
    count: int = 0
    seed: int = 0

    def __post_init__(self):
        n = len(self.mean)
        if len(self.std) != n or len(self.slope) != n:
            raise ValidationError("mean, std and slope must have equal lengths")
        if any(s <= 0 for s in self.std):
            raise ValidationError("standard deviations must be positive")
        if self.count < 0:
            raise ValidationError("count must be non-negative")
        if self.atmosphere is not AtmosphericClass.CLEAR_SKY:
            if self.intensity is None or not 0 < self.intensity[0] < self.intensity[1]:
                raise ValidationError("precipitating classes need intensity bounds 0 < lo < hi")

    @property
    def reference_rate(self) -> float:
        lo, hi = self.intensity
        return math.sqrt(lo * hi)


def generate(spec: ClassSpec, first_id: int = 0) -> list[MatchedSample]:
    """Draw `spec.count` samples with consecutive ids starting at `first_id`.

    Precipitating means shift by ``slope * log2(rate / sqrt(lo * hi))``.
    """
    if spec.count == 0:
        return []
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.count
    noise = rng.standard_normal((n, len(spec.mean)))
    mean = np.asarray(spec.mean)
    std = np.asarray(spec.std)
    slope = np.asarray(spec.slope)
    if spec.atmosphere is AtmosphericClass.CLEAR_SKY:
        rates = np.zeros(n)
        shift = np.zeros((n, len(mean)))
    else:
        lo, hi = spec.intensity
        rates = 2.0 ** rng.uniform(math.log2(lo), math.log2(hi), n)
        shift = np.log2(rates / spec.reference_rate)[:, None] * slope
    tb = np.clip(mean + shift + noise * std, TB_MIN_K, TB_MAX_K)

    snowy = spec.land is LandSurfaceClass.SNOW_COVERED
    snow = rng.uniform(0.6, 1.0, n) if snowy else rng.uniform(0.0, 0.4, n)
    base_t = 266.0 if snowy else 285.0
    skin = base_t + 5.0 * rng.standard_normal(n)
    air = skin + 1.5 * rng.standard_normal(n)
    lat = rng.uniform(45.0, 75.0, n) if snowy else rng.uniform(-60.0, 60.0, n)
    lon = rng.uniform(-180.0, 180.0, n)
    seconds = rng.integers(0, STUDY_DAYS * 86400, n)
    u_passive = rng.uniform(0.0, 1.0, n)
    u_scenario = rng.uniform(0.0, 1.0, n)

    out = []
    for i in range(n):
        active = passive = ref = None
        if spec.atmosphere is not AtmosphericClass.CLEAR_SKY:
            ref = spec.atmosphere.phase
            if ref is PhaseLabel.LIQUID:
                active, passive = PhaseLabel.LIQUID, 0.55 + 0.45 * u_passive[i]
            elif ref is PhaseLabel.SOLID:
                active, passive = PhaseLabel.SOLID, 0.45 * u_passive[i]
            elif u_scenario[i] < 10 / 12:
                active, passive = PhaseLabel.SOLID, 0.55 + 0.45 * u_passive[i]
            else:
                active, passive = PhaseLabel.LIQUID, 0.45 * u_passive[i]
        out.append(MatchedSample(
            sample_id=first_id + i,
            tb=tuple(tb[i].tolist()),
            rate=float(rates[i]),
            snow_fraction=float(snow[i]),
            skin_temp=float(skin[i]),
            air_temp=float(air[i]),
            latitude=float(lat[i]),
            longitude=float(min(lon[i], 179.999999)),
            timestamp=STUDY_START + timedelta(seconds=int(seconds[i])),
            active_phase=active,
            passive_phase_prob=None if passive is None else float(passive),
            ref_phase=ref,
        ))
    return out


class Scenario(NamedTuple):
    build: list
    holdout: list
    specs: tuple


# channels carrying the class offsets for a 13-channel vector (89V, 166V, 183+-3, 183+-7)
_OFFSET_CHANNELS_13 = (7, 9, 11, 12)


def _offset_channels(n_ch: int) -> tuple:
    if n_ch < 4:
        raise ValidationError("separable scenario needs at least 4 channels")
    return _OFFSET_CHANNELS_13 if n_ch == 13 else tuple(range(n_ch - 4, n_ch))


def class_means(separation: float, sigma: float, n_ch: int = DEFAULT_CHANNEL_COUNT):
    """Mean vectors per (land, atmosphere): the four atmospheric classes sit on
    a regular simplex with edge `separation * sigma`."""
    chans = _offset_channels(n_ch)
    base = {
        LandSurfaceClass.NO_SNOW: 260.0 - 40.0 * np.linspace(0, 1, n_ch),
        LandSurfaceClass.SNOW_COVERED: 240.0 - 30.0 * np.linspace(0, 1, n_ch),
    }
    step = separation * sigma / math.sqrt(2.0)
    means = {}
    for land, b in base.items():
        for a, atm in enumerate(AtmosphericClass):
            m = b.copy()
            m[chans[a]] += step
            means[(land, atm)] = m
    return means


def scenario_separable(separation: float, n: int, seed: int, channel_count: int = DEFAULT_CHANNEL_COUNT,
                       sigma: float = 2.0, n_holdout: Optional[int] = None,
                       slope_per_separation: float = -1.0 / 30.0) -> Scenario:
    """Two land classes x four atmospheric classes with class means
    `separation * sigma` apart, as a shuffled build stream plus a disjoint
    holdout stream.

    Precipitating classes cool the upper half of the channels by
    ``slope_per_separation * separation * sigma`` K per doubling of rate
    (-0.2 sigma at 6 sigma), so at zero separation every class has the same
    distribution and no detector can beat chance.
    """
    if separation < 0:
        raise ValidationError("separation must be non-negative")
    n_holdout = n if n_holdout is None else n_holdout
    means = class_means(separation, sigma, channel_count)
    slope = slope_per_separation * separation * sigma
    slope_precip = tuple(slope if j >= channel_count // 2 else 0.0
                         for j in range(channel_count))
    seeds = np.random.SeedSequence(seed).spawn(2 * len(means) + 2)
    specs = []
    streams = ([], [])
    for s, (count, sink) in enumerate(((n, streams[0]), (n_holdout, streams[1]))):
        for c, ((land, atm), mean) in enumerate(sorted(means.items())):
            precip = atm is not AtmosphericClass.CLEAR_SKY
            spec = ClassSpec(
                land, atm, tuple(mean.tolist()), (sigma,) * channel_count,
                slope_precip if precip else (0.0,) * channel_count,
                (0.3, 12.0) if precip else None, count,
                int(seeds[s * len(means) + c].generate_state(1)[0]),
            )
            specs.append(spec)
            sink.extend(generate(spec))
    out = []
    next_id = 0
    for s, stream in enumerate(streams):
        rng = np.random.Generator(np.random.PCG64(seeds[-2 + s]))
        order = rng.permutation(len(stream))
        out.append([replace(stream[j], sample_id=next_id + i) for i, j in enumerate(order)])
        next_id += len(stream)
    return Scenario(out[0], out[1], tuple(specs))
