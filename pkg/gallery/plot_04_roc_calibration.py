"""
Choosing k and the vote threshold from ROC curves
=================================================

For each stage and land class, every candidate k gets an ROC curve by
sweeping the vote threshold j/k. The k with the largest area wins, and the
threshold is read off the sharpest bend of its curve. A moderately
overlapping scenario (3 sigma) keeps the curves away from the corner.
"""

from nestknn import LandSurfaceClass, build_balanced_database, calibrate_all, synthetic
from nestknn.calibration import auc, max_curvature_point, subsample_calibration, threshold_to_p

scenario = synthetic.scenario_separable(3.0, 4000, seed=5, n_holdout=0)
db = build_balanced_database(scenario.build, 4000, seed=1)
cal = subsample_calibration(scenario.build, db, 600)
print(len(cal), "calibration samples outside the database")

grids = {1: (25, 50, 100, 200), 2: (5, 10, 25), 3: (5, 10, 25)}
result = calibrate_all(cal, db, grids, (LandSurfaceClass.NO_SNOW,))

###############################################################################
# Area under each candidate curve

for (land, stage, k), a in sorted(result.auc.items(), key=lambda kv: (kv[0][1], kv[0][2])):
    print(f"stage {stage}  k={k:<4} AUC {a:.4f}")

###############################################################################
# The winning curve for stage 1, and where its curvature peaks

params = result.params[LandSurfaceClass.NO_SNOW]
k1 = params.stage1.k
curve = next(c for c in result.curves if c.stage == 1 and c.k == k1)
print(f"stage 1 picks k={k1}, AUC {auc(curve):.4f}")
for th, f, h in zip(curve.thresholds, curve.p_false, curve.p_hit):
    if th in (1.0, 0.75, 0.5, 0.25, 0.0):
        print(f"  votes > {th:.2f} k : p_F {f:.3f} p_H {h:.3f}")
th = max_curvature_point(curve)
print(f"sharpest bend at threshold {th:.3f} -> p = {threshold_to_p(th, k1):.3f}")

###############################################################################
# The full parameter set

for i, sp in enumerate(params, start=1):
    print(f"stage {i}: k={sp.k} p={sp.p:.3f}")
