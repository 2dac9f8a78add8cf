"""
Verification scores
===================

Occurrence and phase detections are scored with a 2x2 contingency table:
probability of detection, probability of false alarm and the Heidke skill
score. Continuous fields are compared with Spearman correlation, a
normalised RMSE and the Kullback-Leibler divergence of their histograms.
"""

import numpy as np

from nestknn import metrics
from nestknn.core import PhaseLabel
from nestknn.errors import UndefinedMetricError

rng = np.random.default_rng(4)

###############################################################################
# A detector that is right 85% of the time on a 30% base rate

truth = rng.random(5000) < 0.3
pred = np.where(rng.random(5000) < 0.85, truth, ~truth)
t = metrics.contingency(pred, truth)
print(f"a={t.a} b={t.b} c={t.c} d={t.d}")
print(f"POD {metrics.pod(t):.3f}  POFA {metrics.pofa(t):.3f}  HSS {metrics.hss(t):.3f}")

# a coin flip has no skill
coin = rng.random(5000) < 0.5
print(f"coin HSS {metrics.hss(metrics.contingency(coin, truth)):+.3f}")

# an undefined score is an error, never a silent zero
try:
    metrics.pod(metrics.contingency([False, False], [False, False]))
except UndefinedMetricError as exc:
    print("undefined:", exc)

###############################################################################
# Comparing two phase-probability fields

a = rng.beta(2, 5, 4000)
b = np.clip(a + 0.05 * rng.standard_normal(4000), 0, 1)
c = rng.beta(5, 2, 4000)
print(f"spearman(a, b) {metrics.spearman(a, b):.3f}  spearman(a, c) {metrics.spearman(a, c):+.3f}")
print(f"normalised RMSE(a, b) {metrics.rmse_normalized(a, b):.3f}")
Pa, Pb, Pc = (metrics.ProbabilityHistogram.from_values(v, 20) for v in (a, b, c))
print(f"KL(a||b) {metrics.kl_divergence(Pa, Pb):.4f}  KL(a||c) {metrics.kl_divergence(Pa, Pc):.4f}")
print(f"normalised KL(a||c) {metrics.kl_divergence_normalized(Pa, Pc):.3f}")

###############################################################################
# Model output gives snowfall and rainfall rates; a phase follows from their mix

for snow, rain in [(2.0, 0.1), (1.0, 1.0), (0.1, 2.0)]:
    phase = metrics.wrf_phase_from_rates(snow, rain)
    assert isinstance(phase, PhaseLabel)
    print(f"snow {snow} rain {rain} -> {phase.name}")
