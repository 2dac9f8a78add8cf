"""Nested three-stage decision cascade for precipitation occurrence and phase.

Stage 1 votes precipitation against clear sky among the k1 nearest
neighbours (weights W1). Stage 2 re-ranks the precipitating neighbours under
W2 and labels liquid when liquid votes are the unique maximum and exceed
p2*k2. Stage 3 re-ranks the non-liquid members of that same precipitating
pool under W3 and labels solid when solid votes exceed p3*k3, else mixed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    AtmosphericClass,
    LandSurfaceClass,
    PhaseLabel,
    Query,
    StageParams,
    land_class_of,
    utc,
    validate_query,
)
from .database import AprioriDatabase
from .errors import ConfigError, InvariantError, ValidationError
from .knn import NeighborHit, SearchIndex, build_index

_CLEAR = int(AtmosphericClass.CLEAR_SKY)
_LIQ = int(AtmosphericClass.LIQUID)
_SOL = int(AtmosphericClass.SOLID)
_MIX = int(AtmosphericClass.MIXED)


# p is read as the nearest fraction with a denominator of at most this, so
# decimal values such as 0.3 and swept thresholds j / k compare as written
# rather than through their binary approximations
P_DENOMINATOR = 10**6


def vote_fraction(p: float) -> Fraction:
    return Fraction(p).limit_denominator(P_DENOMINATOR)


def exceeds(votes: int, p: float, k: int) -> bool:
    """``votes > p * k`` in rational arithmetic."""
    return votes > vote_fraction(p) * k


class StageVotes(NamedTuple):
    k: int
    counts: tuple        # (n_p,) at stage 1, (n_l, n_s, n_m) at 2, (n_s, n_m) at 3
    threshold: float     # p * k


@dataclass(frozen=True)
class Detection:
    sample_id: int
    precipitating: bool
    phase: Optional[PhaseLabel]
    stage_votes: tuple
    land_class: LandSurfaceClass

    @property
    def n_p(self) -> int:
        return self.stage_votes[0].counts[0]

    def phase_counts(self) -> tuple:
        """(n_l, n_s, n_m) of stage 2, zeros when it did not run."""
        if len(self.stage_votes) > 1:
            return self.stage_votes[1].counts
        return (0, 0, 0)


@dataclass(frozen=True)
class LandParams:
    stage1: StageParams
    stage2: StageParams
    stage3: StageParams

    def __post_init__(self):
        check_stage_constraint(self.stage1, self.stage2)

    def __iter__(self):
        return iter((self.stage1, self.stage2, self.stage3))


def check_stage_constraint(stage1: StageParams, stage2: StageParams) -> None:
    if not stage2.k < vote_fraction(stage1.p) * stage1.k:
        raise ConfigError(
            f"k_2<p_1\\times k_1 violated: k2={stage2.k}, p1*k1={stage1.p * stage1.k:g}"
        )


def detect_occurrence(neighbors: Sequence[NeighborHit], k1: int, p1: float) -> tuple[bool, int]:
    if len(neighbors) != k1:
        raise ValidationError(f"expected {k1} neighbours, got {len(neighbors)}")
    n_p = sum(1 for h in neighbors if h.atmospheric_class != AtmosphericClass.CLEAR_SKY)
    return exceeds(n_p, p1, k1), n_p


def liquid_rule(n_l: int, n_s: int, n_m: int, k2: int, p2: float) -> bool:
    return n_l > n_s and n_l > n_m and exceeds(n_l, p2, k2)


def solid_rule(n_s: int, n_m: int, k3: int, p3: float) -> bool:
    return exceeds(n_s, p3, k3)


def _phase_cascade(pool: np.ndarray, y, stage2: StageParams, stage3: StageParams,
                   index: SearchIndex):
    """Stages 2 and 3 over `pool` (row positions of precipitating neighbours).

    Returns (phase, stage-2 votes, stage-3 votes or None).
    """
    if stage2.k > len(pool):
        raise ValidationError(f"k2={stage2.k} exceeds the {len(pool)} precipitating neighbours")
    near2, _ = index.rerank(pool, y, stage2.weights, stage2.k)
    c2 = index.classes[near2]
    n_l = int(np.count_nonzero(c2 == _LIQ))
    n_s = int(np.count_nonzero(c2 == _SOL))
    n_m = int(np.count_nonzero(c2 == _MIX))
    v2 = StageVotes(stage2.k, (n_l, n_s, n_m), stage2.p * stage2.k)
    if liquid_rule(n_l, n_s, n_m, stage2.k, stage2.p):
        return PhaseLabel.LIQUID, v2, None
    rest = pool[index.classes[pool] != _LIQ]
    if len(rest) == 0:
        # an all-liquid pool always passes the liquid vote since p2 < 1
        raise InvariantError("liquid vote failed on an all-liquid pool")
    k3 = min(stage3.k, len(rest))
    near3, _ = index.rerank(rest, y, stage3.weights, k3)
    c3 = index.classes[near3]
    s3 = int(np.count_nonzero(c3 == _SOL))
    m3 = k3 - s3
    v3 = StageVotes(k3, (s3, m3), stage3.p * k3)
    phase = PhaseLabel.SOLID if solid_rule(s3, m3, k3, stage3.p) else PhaseLabel.MIXED
    return phase, v2, v3


def detect_phase(precip_neighbor_ids, y, stage2: StageParams, stage3: StageParams,
                 index: SearchIndex) -> PhaseLabel:
    """Phase of a precipitating query from the ids of its precipitating neighbours."""
    pos = index_positions(index, precip_neighbor_ids)
    return _phase_cascade(pos, y, stage2, stage3, index)[0]


def index_positions(index: SearchIndex, sample_ids) -> np.ndarray:
    lookup = {int(i): p for p, i in enumerate(index.ids)}
    try:
        return np.array([lookup[int(i)] for i in sample_ids], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"sample_id {exc.args[0]} is not in the index") from None


class Detector:
    """Calibrated parameters plus one stage-1 index per land class.

    Immutable after construction; `retrieve` may be called concurrently.
    """

    def __init__(self, db: AprioriDatabase, params: Mapping[LandSurfaceClass, LandParams]):
        self.db = db
        self.params = dict(params)
        self.indexes = {}
        for land, lp in self.params.items():
            stratum = db.samples(land)
            if lp.stage1.k > len(stratum):
                raise ConfigError(f"k1={lp.stage1.k} exceeds the {land.name} stratum size {len(stratum)}")
            self.indexes[land] = build_index(stratum, lp.stage1.weights)

    def retrieve(self, query: Query) -> Detection:
        validate_query(query, self.db.channel_count)
        land = land_class_of(query.snow_fraction)
        if land not in self.indexes:
            raise ValidationError(f"no parameters or database stratum for land class {land.name}")
        lp = self.params[land]
        index = self.indexes[land]
        y = np.asarray(query.tb, dtype=np.float64)
        pos, _ = index.query_positions(y, lp.stage1.k)
        precip = pos[index.classes[pos] != _CLEAR]
        n_p = len(precip)
        v1 = StageVotes(lp.stage1.k, (n_p,), lp.stage1.p * lp.stage1.k)
        if not exceeds(n_p, lp.stage1.p, lp.stage1.k):
            return Detection(query.sample_id, False, None, (v1,), land)
        phase, v2, v3 = _phase_cascade(precip, y, lp.stage2, lp.stage3, index)
        votes = (v1, v2) if v3 is None else (v1, v2, v3)
        return Detection(query.sample_id, True, phase, votes, land)

    def retrieve_batch(self, queries: Sequence[Query], workers: int = 1) -> list[Detection]:
        """Retrieve many queries; output order and content do not depend on `workers`."""
        if workers <= 1:
            return [self.retrieve(q) for q in queries]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.retrieve, queries))


def retrieve(y, land: LandSurfaceClass, params: Mapping[LandSurfaceClass, LandParams],
             db: AprioriDatabase, detector: Optional[Detector] = None) -> Detection:
    """One-shot retrieval of a bare channel vector over `land`.

    Pass a prebuilt `detector` to avoid rebuilding the index on every call.
    """
    if land not in db.strata:
        raise ValidationError(f"database has no stratum for land class {land.name}")
    if land not in params:
        raise ConfigError(f"no calibrated parameters for land class {land.name}")
    detector = detector or Detector(db, {land: params[land]})
    snow = 1.0 if land is LandSurfaceClass.SNOW_COVERED else 0.0
    q = Query(-1, tuple(float(v) for v in y), snow, 0.0, 0.0, utc(2000, 1, 1))
    return detector.retrieve(q)
