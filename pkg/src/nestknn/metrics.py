"""Categorical skill scores and distribution-similarity measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core import ContingencyTable, PhaseLabel
from .errors import UndefinedMetricError, ValidationError


def contingency(pred: Sequence[bool], truth: Sequence[bool]) -> ContingencyTable:
    p = np.asarray(pred, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape or p.ndim != 1:
        raise ValidationError(f"prediction/truth length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValidationError("contingency table needs at least one pair")
    return ContingencyTable(
        a=int(np.count_nonzero(p & t)),
        b=int(np.count_nonzero(p & ~t)),
        c=int(np.count_nonzero(~p & t)),
        d=int(np.count_nonzero(~p & ~t)),
    )


def pod(t: ContingencyTable) -> float:
    """Probability of detection a / (a + c)."""
    if t.a + t.c == 0:
        raise UndefinedMetricError("POD undefined: no observed events (a + c = 0)")
    return t.a / (t.a + t.c)


def pofa(t: ContingencyTable) -> float:
    """Probability of false alarm b / (b + d)."""
    if t.b + t.d == 0:
        raise UndefinedMetricError("POFA undefined: no observed non-events (b + d = 0)")
    return t.b / (t.b + t.d)


def hss(t: ContingencyTable) -> float:
    a, b, c, d = t.a, t.b, t.c, t.d
    denom = (a + c) * (c + d) + (a + b) * (b + d)
    if denom == 0:
        raise UndefinedMetricError("HSS undefined: zero denominator")
    return 2 * (a * d - b * c) / denom


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValidationError("spearman needs two equal-length sequences of at least 2 values")
    rx = rankdata(x) - (x.size + 1) / 2
    ry = rankdata(y) - (y.size + 1) / 2
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise UndefinedMetricError("spearman undefined for a constant sequence")
    r = float(rx @ ry) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def rmse_normalized(x: Sequence[float], y: Sequence[float]) -> float:
    """RMS difference of two probability fields; already bounded by [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size == 0:
        raise ValidationError("rmse needs two equal-length non-empty sequences")
    for v in (x, y):
        if np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v)):
            raise ValidationError("rmse inputs must be probabilities in [0, 1]")
    return float(np.sqrt(np.mean((x - y) ** 2)))


@dataclass(frozen=True)
class ProbabilityHistogram:
    counts: tuple

    @classmethod
    def from_values(cls, values: Sequence[float], n_bins: int = 20) -> "ProbabilityHistogram":
        v = np.asarray(values, dtype=np.float64)
        if v.size and (np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v))):
            raise ValidationError("histogram values must lie in [0, 1]")
        counts, _ = np.histogram(v, bins=n_bins, range=(0.0, 1.0))
        return cls(tuple(int(c) for c in counts))

    @classmethod
    def from_frequencies(cls, freqs: Sequence[float]) -> "ProbabilityHistogram":
        """Histogram from normalised frequencies (no sample count; see `total`)."""
        f = np.asarray(freqs, dtype=np.float64)
        if np.any(f < 0) or f.sum() <= 0:
            raise ValidationError("frequencies must be non-negative with positive sum")
        return cls(tuple(float(x) for x in f))

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def bin_width(self) -> float:
        return 1.0 / self.n_bins

    @property
    def total(self) -> float:
        return float(sum(self.counts))

    @property
    def frequencies(self) -> np.ndarray:
        c = np.asarray(self.counts, dtype=np.float64)
        if c.sum() <= 0:
            raise UndefinedMetricError("histogram is empty")
        return c / c.sum()


def _regularised(P: ProbabilityHistogram, Q: ProbabilityHistogram):
    if P.n_bins != Q.n_bins:
        raise ValidationError(f"bin-count mismatch: {P.n_bins} vs {Q.n_bins}")
    p = P.frequencies
    q = Q.frequencies
    gap = (q == 0) & (p > 0)
    if np.any(gap):
        q = q.copy()
        q[gap] = 1.0 / (10.0 * Q.total)
        q = q / q.sum()
    return p, q


def kl_divergence(P: ProbabilityHistogram, Q: ProbabilityHistogram) -> float:
    """Discrete Kullback-Leibler divergence sum P ln(P/Q), natural log.

    Bins where Q is empty but P is not get Q = 1 / (10 * total count of Q)
    before Q is renormalised.
    """
    p, q = _regularised(P, Q)
    m = p > 0
    return max(0.0, float(np.sum(p[m] * np.log(p[m] / q[m]))))


def kl_divergence_normalized(P: ProbabilityHistogram, Q: ProbabilityHistogram) -> float:
    """KL divided by its upper bound ln(1 / min Q) over bins where P > 0."""
    p, q = _regularised(P, Q)
    m = p > 0
    bound = float(np.log(1.0 / q[m].min()))
    if bound == 0:
        return 0.0
    return min(1.0, kl_divergence(P, Q) / bound)


def wrf_phase_from_rates(snow_rate: float, rain_rate: float, rule: str = "fraction") -> PhaseLabel:
    """Discrete phase from simulated snowfall and rainfall intensities.

    rule="fraction" thresholds snow / (snow + rain); rule="ratio" thresholds
    snow / rain literally (pure snow counts as an infinite ratio).
    Above 0.66 is solid, below 0.33 is liquid, anything between is mixed.
    """
    if snow_rate < 0 or rain_rate < 0 or not (math.isfinite(snow_rate) and math.isfinite(rain_rate)):
        raise ValidationError("rates must be finite and non-negative")
    if snow_rate == 0 and rain_rate == 0:
        raise ValidationError("phase undefined when both rates are zero")
    if rule == "fraction":
        f = snow_rate / (snow_rate + rain_rate)
    elif rule == "ratio":
        f = math.inf if rain_rate == 0 else snow_rate / rain_rate
    else:
        raise ValidationError(f"unknown phase rule {rule!r}")
    if f > 0.66:
        return PhaseLabel.SOLID
    if f < 0.33:
        return PhaseLabel.LIQUID
    return PhaseLabel.MIXED


def signal_separation(clear_means, precip_means):
    """Per-channel difference (precipitating minus clear) and its RMS."""
    a = np.asarray(clear_means, dtype=np.float64)
    b = np.asarray(precip_means, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = b - a
    return diff, float(np.sqrt(np.mean(diff ** 2)))


def class_mean_vectors(samples, key) -> dict:
    """Mean channel vector per group, grouping samples with `key(sample)`."""
    groups: dict = {}
    for s in samples:
        groups.setdefault(key(s), []).append(s.tb)
    return {g: np.mean(np.asarray(v, dtype=np.float64), axis=0) for g, v in groups.items()}


def intensity_bin_means(samples) -> dict:
    """Mean channel vector per (atmospheric class, intensity bin) for precipitating samples."""
    from .database import assign_intensity_bin
    return class_mean_vectors(
        (s for s in samples if s.rate > 0),
        lambda s: (s.atmospheric_class, assign_intensity_bin(s.rate).index),
    )
