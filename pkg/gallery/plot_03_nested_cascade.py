"""
The nested detection cascade
============================

Stage 1 votes precipitation against clear sky among the k1 nearest
database records. When precipitation wins, its precipitating neighbours
are re-ranked under the stage-2 weights to vote for liquid, and the
non-liquid remainder is re-ranked again to separate solid from mixed.
"""

from collections import Counter

from nestknn import (
    Detector,
    LandParams,
    LandSurfaceClass,
    StageParams,
    WeightMatrix,
    build_balanced_database,
    synthetic,
)
from nestknn.errors import ConfigError
from nestknn.metrics import contingency, hss, pod, pofa

scenario = synthetic.scenario_separable(6.0, 3000, seed=3, n_holdout=500)
db = build_balanced_database(scenario.build, 5000, seed=1)

I = WeightMatrix.identity(13)
params = LandParams(StageParams(50, I, 0.5), StageParams(10, I, 0.4), StageParams(10, I, 0.5))
detector = Detector(db, {land: params for land in LandSurfaceClass})

###############################################################################
# One query, with the votes cast at each stage

sample = next(s for s in scenario.holdout if s.rate > 0)
det = detector.retrieve(sample.as_query())
print("truth:", sample.ref_phase.name, "detected:", det.phase.name)
for stage, votes in enumerate(det.stage_votes, start=1):
    print(f"  stage {stage}: k={votes.k} counts={votes.counts}")

###############################################################################
# Skill over the whole holdout set

queries = [s.as_query() for s in scenario.holdout]
out = detector.retrieve_batch(queries, workers=4)
t = contingency([d.precipitating for d in out], [s.rate > 0 for s in scenario.holdout])
print(f"occurrence POD {pod(t):.3f} POFA {pofa(t):.3f} HSS {hss(t):.3f}")
pairs = Counter((s.ref_phase.name, d.phase.name) for d, s in zip(out, scenario.holdout)
                if d.precipitating and s.rate > 0)
for (truth, got), n in sorted(pairs.items()):
    print(f"  {truth:<7} -> {got:<7} {n}")

###############################################################################
# Stage 2 can only draw from the precipitating pool, so k2 must stay below p1 * k1

try:
    LandParams(StageParams(20, I, 0.5), StageParams(10, I, 0.4), StageParams(10, I, 0.5))
except ConfigError as exc:
    print("rejected:", exc)
