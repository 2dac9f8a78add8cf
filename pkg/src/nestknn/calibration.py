"""Choice of (k, p) per stage and land class from ROC curves.

For a fixed k each calibration query yields a vote count once; sweeping the
vote threshold p over {1, (k-1)/k, ..., 0} with the strict rule
``votes > p * k`` traces the curve. The k with the largest area under the
curve wins, and p is taken at the vertex of maximum discrete curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    AtmosphericClass,
    LandSurfaceClass,
    MatchedSample,
    StageParams,
    WeightMatrix,
    land_class_of,
    validate_sample,
)
from .database import AprioriDatabase
from .detector import LandParams, exceeds, liquid_rule, vote_fraction
from .errors import ConfigError, UndefinedMetricError, ValidationError
from .knn import SearchIndex, build_index

DEFAULT_CANDIDATE_KS = (25, 50, 100, 200, 400)
STAGES = (1, 2, 3)

_CLEAR = int(AtmosphericClass.CLEAR_SKY)
_LIQ = int(AtmosphericClass.LIQUID)
_SOL = int(AtmosphericClass.SOLID)
_MIX = int(AtmosphericClass.MIXED)


@dataclass(frozen=True)
class RocCurve:
    """ROC points ordered by false-alarm rate, with the threshold of each.

    The first point is (0, 0) at threshold 1; the last is the limiting
    full-acceptance point (1, 1), stored with threshold -1/k.
    """

    p_false: tuple
    p_hit: tuple
    thresholds: tuple
    k: int
    stage: int = 0
    land: Optional[LandSurfaceClass] = None

    def __len__(self):
        return len(self.p_false)

    @property
    def swept_thresholds(self) -> tuple:
        return tuple(t for t in self.thresholds if t >= 0)

    def rows(self):
        land = self.land.name if self.land is not None else ""
        for t, f, h in zip(self.thresholds, self.p_false, self.p_hit):
            yield self.stage, land, self.k, t, f, h


def roc_from_votes(votes, labels, k: int, effective_k=None, stage: int = 0,
                   land: Optional[LandSurfaceClass] = None) -> RocCurve:
    """Sweep ``votes > (j / k) * effective_k`` for j = k, ..., 0.

    `effective_k` (default k) is the per-query number of voters, which can
    be smaller than k when a candidate pool is clamped.
    """
    votes = np.asarray(votes, dtype=np.int64)
    labels = np.asarray(labels, dtype=bool)
    kk = np.full(votes.shape, k, dtype=np.int64) if effective_k is None else np.asarray(effective_k, np.int64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError(
            f"calibration set needs positive and negative cases (got {n_pos} / {n_neg})"
        )
    pf, ph, th = [], [], []
    for j in range(k, -1, -1):
        det = votes * k > j * kk
        ph.append(np.count_nonzero(det & labels) / n_pos)
        pf.append(np.count_nonzero(det & ~labels) / n_neg)
        th.append(j / k)
    pf.append(1.0)
    ph.append(1.0)
    th.append(-1.0 / k)
    return RocCurve(tuple(pf), tuple(ph), tuple(th), k, stage, land)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under (p_F, p_H), closing with (0,0) and (1,1)."""
    f = np.asarray(curve.p_false, dtype=np.float64)
    h = np.asarray(curve.p_hit, dtype=np.float64)
    if f.size < 2:
        raise ValidationError("AUC needs at least two ROC points")
    if np.any(np.diff(f) < 0):
        raise ValidationError("ROC points must be sorted by false-alarm rate")
    if f[0] != 0 or h[0] != 0:
        f = np.concatenate(([0.0], f))
        h = np.concatenate(([0.0], h))
    if f[-1] != 1 or h[-1] != 1:
        f = np.concatenate((f, [1.0]))
        h = np.concatenate((h, [1.0]))
    return float(np.sum(np.diff(f) * (h[1:] + h[:-1]) / 2.0))


def menger_curvature(a, b, c) -> float:
    """Curvature of the circle through three points (0 if degenerate)."""
    ab = math.dist(a, b)
    bc = math.dist(b, c)
    ca = math.dist(c, a)
    if ab == 0 or bc == 0 or ca == 0:
        return 0.0
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return 2.0 * abs(cross) / (ab * bc * ca)


def _collapse_runs(points, thresholds):
    """Merge consecutive identical points; a run keeps its middle threshold
    (the larger middle for even runs)."""
    out_pts, out_th = [], []
    i = 0
    while i < len(points):
        j = i
        while j + 1 < len(points) and points[j + 1] == points[i]:
            j += 1
        run = thresholds[i:j + 1]  # descending
        out_pts.append(points[i])
        out_th.append(run[(len(run) - 1) // 2])
        i = j + 1
    return out_pts, out_th


def max_curvature_point(curve: RocCurve, tie_rtol: float = 1e-9) -> float:
    """Threshold at the ROC vertex of maximum Menger curvature.

    Identical consecutive points are merged first. With at least five
    distinct points they are smoothed by a 3-point moving average (end
    points fixed) and curvature is evaluated only at vertices whose whole
    triple was smoothed. Ties go to the larger threshold.
    """
    if len(curve) < 5:
        raise ValidationError(f"curvature needs at least 5 ROC points, got {len(curve)}")
    pts, th = _collapse_runs(list(zip(curve.p_false, curve.p_hit)), list(curve.thresholds))
    n = len(pts)
    if n < 3:
        raise UndefinedMetricError("no curvature maximum: fewer than 3 distinct ROC points")
    if n >= 5:
        arr = np.asarray(pts, dtype=np.float64)
        sm = arr.copy()
        sm[1:-1] = (arr[:-2] + arr[1:-1] + arr[2:]) / 3.0
        vertices = range(2, n - 2)
        pts_eval = [tuple(p) for p in sm]
    else:
        vertices = range(1, n - 1)
        pts_eval = pts
    kappa = {i: menger_curvature(pts_eval[i - 1], pts_eval[i], pts_eval[i + 1]) for i in vertices}
    top = max(kappa.values())
    if top <= 1e-9:
        raise UndefinedMetricError("no curvature maximum: ROC curve is straight")
    tied = [i for i, v in kappa.items() if v >= top * (1.0 - tie_rtol)]
    return max(th[i] for i in tied)


def threshold_to_p(threshold: float, k: int) -> float:
    """Map a swept threshold onto the open interval (0, 1) without changing
    the integer decision it encodes."""
    if threshold <= 0:
        return 0.5 / k
    if threshold >= 1:
        return (k - 0.5) / k
    return threshold


# ---------------------------------------------------------------- vote tables

def calibration_queries(calibration_set: Iterable[MatchedSample], db: AprioriDatabase,
                        land: LandSurfaceClass) -> list[MatchedSample]:
    """Validated calibration samples of one land class, excluding database ids."""
    used = db.all_ids()
    return [validate_sample(s, db.channel_count) for s in calibration_set
            if s.sample_id not in used and land_class_of(s.snow_fraction) is land]


@dataclass
class _StageTable:
    votes: np.ndarray        # (n_queries, n_ks)
    effective: np.ndarray    # (n_queries, n_ks)
    labels: np.ndarray       # (n_queries,)


def _vectors(queries):
    return np.array([q.tb for q in queries], dtype=np.float64).reshape(len(queries), -1)


def _stage1_neighbors(index: SearchIndex, Y, k):
    return [index.query_positions(y, k)[0] for y in Y]


def _stage1_table(index, queries, ks):
    kmax = max(ks)
    Y = _vectors(queries)
    votes = np.empty((len(queries), len(ks)), np.int64)
    for i, pos in enumerate(_stage1_neighbors(index, Y, kmax)):
        precip = np.cumsum(index.classes[pos] != _CLEAR)
        votes[i] = precip[np.asarray(ks) - 1]
    labels = np.array([q.rate > 0 for q in queries])
    return _StageTable(votes, np.broadcast_to(np.asarray(ks), votes.shape), labels)


def _precip_pools(index, queries, s1: StageParams):
    """(query row, pool positions) for precipitating queries detected at stage 1."""
    Y = _vectors(queries)
    out = []
    for i, q in enumerate(queries):
        if q.rate <= 0:
            continue
        pos, _ = index.query_positions(Y[i], s1.k)
        pool = pos[index.classes[pos] != _CLEAR]
        if exceeds(len(pool), s1.p, s1.k):
            out.append((i, pool))
    return Y, out


def _stage2_table(index, queries, s1, W2, ks):
    Y, pools = _precip_pools(index, queries, s1)
    votes = np.zeros((len(pools), len(ks)), np.int64)
    labels = np.zeros(len(pools), bool)
    for r, (i, pool) in enumerate(pools):
        if max(ks) > len(pool):
            raise ConfigError(f"k2={max(ks)} exceeds a precipitating pool of {len(pool)}")
        ranked, _ = index.rerank(pool, Y[i], W2, len(pool))
        liquid = np.cumsum(index.classes[ranked] == _LIQ)
        votes[r] = liquid[np.asarray(ks) - 1]
        labels[r] = queries[i].atmospheric_class is AtmosphericClass.LIQUID
    return _StageTable(votes, np.broadcast_to(np.asarray(ks), votes.shape), labels)


def _stage3_table(index, queries, s1, s2, W3, ks):
    Y, pools = _precip_pools(index, queries, s1)
    rows_v, rows_e, labels = [], [], []
    ks_arr = np.asarray(ks)
    for i, pool in pools:
        if queries[i].atmospheric_class is AtmosphericClass.LIQUID:
            continue
        near2, _ = index.rerank(pool, Y[i], s2.weights, s2.k)
        c2 = index.classes[near2]
        n_l, n_s, n_m = (int(np.count_nonzero(c2 == c)) for c in (_LIQ, _SOL, _MIX))
        if liquid_rule(n_l, n_s, n_m, s2.k, s2.p):
            continue
        rest = pool[index.classes[pool] != _LIQ]
        if len(rest) == 0:
            continue
        ranked, _ = index.rerank(rest, Y[i], W3, len(rest))
        solid = np.cumsum(index.classes[ranked] == _SOL)
        eff = np.minimum(ks_arr, len(rest))
        rows_v.append(solid[eff - 1])
        rows_e.append(eff)
        labels.append(queries[i].atmospheric_class is AtmosphericClass.SOLID)
    if not rows_v:
        raise ValidationError("no calibration queries reach stage 3")
    return _StageTable(np.array(rows_v), np.array(rows_e), np.array(labels))


def _curves(table: _StageTable, ks, stage, land) -> list[RocCurve]:
    return [roc_from_votes(table.votes[:, j], table.labels, k, table.effective[:, j], stage, land)
            for j, k in enumerate(ks)]


def roc_curve(calibration_set, db: AprioriDatabase, k: int, stage: int, land: LandSurfaceClass,
              weights: Optional[WeightMatrix] = None, prior: Sequence[StageParams] = (),
              index: Optional[SearchIndex] = None) -> RocCurve:
    """ROC curve of one stage at one k.

    Stage 2 needs the calibrated stage-1 params in `prior`; stage 3 needs
    stage 1 and stage 2. `weights` is this stage's matrix (identity default);
    stage 1 uses it to build the index unless `index` is given.
    """
    return select_k([k], calibration_set, db, stage, land, weights, prior, index)[1][0]


def select_k(candidate_ks: Sequence[int], calibration_set, db: AprioriDatabase, stage: int,
             land: LandSurfaceClass, weights: Optional[WeightMatrix] = None,
             prior: Sequence[StageParams] = (), index: Optional[SearchIndex] = None):
    """k with the largest AUC (smallest k on ties) and every curve computed."""
    ks = sorted(set(int(k) for k in candidate_ks))
    if not ks:
        raise ConfigError("no candidate k values")
    stratum = db.samples(land)
    if ks[-1] > len(stratum):
        raise ConfigError(f"candidate k={ks[-1]} exceeds the {land.name} stratum size {len(stratum)}")
    W = weights if weights is not None else WeightMatrix.identity(db.channel_count)
    queries = calibration_queries(calibration_set, db, land)
    if stage == 1:
        idx = index if index is not None else build_index(stratum, W)
        table = _stage1_table(idx, queries, ks)
    else:
        s1 = prior[0]
        idx = index if index is not None else build_index(stratum, s1.weights)
        if stage == 2:
            table = _stage2_table(idx, queries, s1, W, ks)
        elif stage == 3:
            table = _stage3_table(idx, queries, s1, prior[1], W, ks)
        else:
            raise ConfigError(f"unknown stage {stage}")
    curves = _curves(table, ks, stage, land)
    areas = [auc(c) for c in curves]
    best = max(range(len(ks)), key=lambda j: (areas[j], -ks[j]))
    return ks[best], curves


@dataclass(frozen=True)
class CalibrationResult:
    params: Mapping[LandSurfaceClass, LandParams]
    curves: tuple
    auc: Mapping

    def report_rows(self):
        for c in self.curves:
            yield from c.rows()


def calibrate_all(calibration_set, db: AprioriDatabase,
                  candidate_ks: Sequence[int] | Mapping[int, Sequence[int]] = DEFAULT_CANDIDATE_KS,
                  lands: Sequence[LandSurfaceClass] = tuple(LandSurfaceClass),
                  weights: Optional[Mapping] = None) -> CalibrationResult:
    """Calibrate all three stages for each land class.

    `candidate_ks` is either one grid for every stage or a mapping
    stage -> grid. `weights` maps (land, stage) -> WeightMatrix; missing
    entries default to the identity. Stage-2 candidates are restricted to
    k2 < p1 * k1.
    """
    calibration_set = list(calibration_set)
    grids = candidate_ks if isinstance(candidate_ks, Mapping) else {s: candidate_ks for s in STAGES}
    weights = dict(weights or {})
    params, curves, areas = {}, [], {}
    for land in lands:
        W = {s: weights.get((land, s), WeightMatrix.identity(db.channel_count)) for s in STAGES}
        index = build_index(db.samples(land), W[1])
        chosen = []
        for stage in STAGES:
            grid = list(grids[stage])
            if stage == 2:
                s1 = chosen[0]
                grid = [k for k in grid if k < vote_fraction(s1.p) * s1.k]
                if not grid:
                    raise ConfigError(
                        f"no admissible k2 for {land.name}: k_2<p_1\\times k_1 requires "
                        f"k2 < {s1.p * s1.k:g}"
                    )
            k, cs = select_k(grid, calibration_set, db, stage, land, W[stage], chosen, index)
            curve = next(c for c in cs if c.k == k)
            p = threshold_to_p(max_curvature_point(curve), k)
            chosen.append(StageParams(k, W[stage], p))
            curves.extend(cs)
            for c in cs:
                areas[(land, stage, c.k)] = auc(c)
        params[land] = LandParams(*chosen)
    return CalibrationResult(params, tuple(curves), areas)


def subsample_calibration(samples: Iterable[MatchedSample], db: AprioriDatabase,
                          max_per_class: int) -> list[MatchedSample]:
    """First `max_per_class` samples of each (land, atmosphere) class in input
    order, skipping anything already in the database."""
    used = db.all_ids()
    taken: dict = {}
    out = []
    for s in samples:
        if s.sample_id in used:
            continue
        key = (land_class_of(s.snow_fraction), s.atmospheric_class)
        if taken.get(key, 0) < max_per_class:
            taken[key] = taken.get(key, 0) + 1
            out.append(s)
    return out
