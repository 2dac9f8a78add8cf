import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestknn.core import ContingencyTable, PhaseLabel
from nestknn.errors import UndefinedMetricError, ValidationError
from nestknn.metrics import (
    ProbabilityHistogram,
    contingency,
    hss,
    intensity_bin_means,
    kl_divergence,
    kl_divergence_normalized,
    pod,
    pofa,
    rmse_normalized,
    signal_separation,
    spearman,
    wrf_phase_from_rates,
)

from conftest import make_sample


def tally(pred, truth):
    """Counting oracle, one pair at a time."""
    a = b = c = d = 0
    for p, t in zip(pred, truth):
        if p and t:
            a += 1
        elif p:
            b += 1
        elif t:
            c += 1
        else:
            d += 1
    return a, b, c, d


def test_contingency_examples():
    assert contingency([True] * 10, [True] * 10) == ContingencyTable(10, 0, 0, 0)
    truth = [True] * 4 + [False] * 6
    t = contingency([not x for x in truth], truth)
    assert (t.a, t.d) == (0, 0) and t.b + t.c == 10


@settings(max_examples=50)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=200))
def test_contingency_matches_tally(pairs):
    pred, truth = zip(*pairs)
    t = contingency(pred, truth)
    assert (t.a, t.b, t.c, t.d) == tally(pred, truth)


def test_contingency_length_mismatch():
    with pytest.raises(ValidationError):
        contingency([True], [True, False])


def test_pod_pofa_examples():
    assert pod(ContingencyTable(8, 0, 2, 0)) == 0.8
    assert pofa(ContingencyTable(0, 1, 0, 9)) == 0.1
    with pytest.raises(UndefinedMetricError):
        pod(ContingencyTable(0, 3, 0, 4))
    with pytest.raises(UndefinedMetricError):
        pofa(ContingencyTable(3, 0, 4, 0))


def test_hss_examples():
    assert hss(ContingencyTable(10, 0, 0, 10)) == 1.0
    assert hss(ContingencyTable(40, 10, 10, 40)) == pytest.approx(0.6, abs=1e-15)
    assert hss(ContingencyTable(2, 4, 3, 6)) == 0.0
    with pytest.raises(UndefinedMetricError):
        hss(ContingencyTable(0, 0, 0, 0))


def test_hss_random_labels():
    rng = np.random.default_rng(4)
    n = 10_000
    t = contingency(rng.random(n) < 0.3, rng.random(n) < 0.5)
    assert abs(hss(t)) < 0.05


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metric_ranges(a, b, c, d):
    t = ContingencyTable(a, b, c, d)
    if a + c:
        assert 0 <= pod(t) <= 1
    if b + d:
        assert 0 <= pofa(t) <= 1
    try:
        h = hss(t)
    except UndefinedMetricError:
        return
    assert h <= 1 + 1e-15
    if a * d == b * c:
        assert h == 0


def test_spearman_examples():
    x = np.linspace(-3, 3, 20)
    assert spearman(x, x ** 3) == 1.0
    assert spearman(x, -x) == -1.0
    with pytest.raises(UndefinedMetricError):
        spearman([1, 1, 1], [1, 2, 3])


def naive_ranks(v):
    order = sorted(range(len(v)), key=lambda i: v[i])
    ranks = [0.0] * len(v)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        for m in range(i, j + 1):
            ranks[order[m]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def naive_spearman(x, y):
    rx, ry = naive_ranks(x), naive_ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def test_spearman_ties_vs_naive():
    x = [1, 2, 2, 3, 5, 5, 5, 8]
    y = [2, 1, 4, 4, 3, 9, 9, 7]
    assert spearman(x, y) == pytest.approx(naive_spearman(x, y), abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=3, max_size=40))
def test_spearman_monotone_invariance(pairs):
    x, y = (np.array(v, dtype=float) for v in zip(*pairs))
    try:
        r = spearman(x, y)
    except UndefinedMetricError:
        return
    assert r == pytest.approx(naive_spearman(x, y), abs=1e-12)
    assert spearman(np.exp(x), y ** 3) == pytest.approx(r, abs=1e-12)


def test_rmse():
    assert rmse_normalized([0.2, 0.4], [0.2, 0.4]) == 0.0
    assert rmse_normalized([0, 0, 0], [1, 1, 1]) == 1.0
    rng = np.random.default_rng(1)
    x, y = rng.random(100), rng.random(100)
    assert rmse_normalized(x, y) == pytest.approx(math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)) / 100))
    with pytest.raises(ValidationError):
        rmse_normalized([1.2], [0.0])


def test_kl_examples():
    u = ProbabilityHistogram((5,) * 20)
    assert kl_divergence(u, u) == 0.0
    P = ProbabilityHistogram.from_frequencies([1.0, 0.0])
    Q = ProbabilityHistogram.from_frequencies([0.5, 0.5])
    assert kl_divergence(P, Q) == pytest.approx(math.log(2), abs=1e-15)


def test_kl_asymmetric():
    P = ProbabilityHistogram((8, 2))
    Q = ProbabilityHistogram((5, 5))
    assert kl_divergence(P, Q) != pytest.approx(kl_divergence(Q, P))


def test_kl_regularises_empty_bins():
    P = ProbabilityHistogram((5, 5))
    Q = ProbabilityHistogram((10, 0))
    # the empty bin becomes 1 / (10 * 10) before renormalising
    q = np.array([1.0, 0.01]) / 1.01
    expected = 0.5 * math.log(0.5 / q[0]) + 0.5 * math.log(0.5 / q[1])
    assert kl_divergence(P, Q) == pytest.approx(expected, rel=1e-12)


def test_kl_bin_mismatch():
    with pytest.raises(ValidationError):
        kl_divergence(ProbabilityHistogram((1, 2)), ProbabilityHistogram((1, 2, 3)))


@settings(max_examples=200)
@given(st.lists(st.integers(0, 50), min_size=20, max_size=20).filter(any),
       st.lists(st.integers(0, 50), min_size=20, max_size=20).filter(any))
def test_kl_properties(p, q):
    P, Q = ProbabilityHistogram(tuple(p)), ProbabilityHistogram(tuple(q))
    assert kl_divergence(P, Q) >= 0
    assert abs(kl_divergence(P, P)) < 1e-12
    assert 0 <= kl_divergence_normalized(P, Q) <= 1


def test_histogram_from_values():
    h = ProbabilityHistogram.from_values([0.0, 0.04, 0.05, 0.99, 1.0])
    assert h.n_bins == 20 and h.counts[0] == 2 and h.counts[1] == 1 and h.counts[19] == 2
    with pytest.raises(ValidationError):
        ProbabilityHistogram.from_values([1.5])


@pytest.mark.parametrize("snow,rain,expected", [
    (0.8, 0.2, PhaseLabel.SOLID), (0.1, 0.9, PhaseLabel.LIQUID), (0.5, 0.5, PhaseLabel.MIXED),
    (1.0, 0.0, PhaseLabel.SOLID), (0.0, 1.0, PhaseLabel.LIQUID),
])
def test_wrf_fraction_rule(snow, rain, expected):
    assert wrf_phase_from_rates(snow, rain) is expected


def test_wrf_ratio_rule():
    # snow / rain read literally: 0.5 is mixed, 1.0 is solid
    assert wrf_phase_from_rates(1.0, 2.0, rule="ratio") is PhaseLabel.MIXED
    assert wrf_phase_from_rates(1.0, 1.0, rule="ratio") is PhaseLabel.SOLID
    assert wrf_phase_from_rates(1.0, 0.0, rule="ratio") is PhaseLabel.SOLID
    with pytest.raises(ValidationError):
        wrf_phase_from_rates(0.0, 0.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_wrf_partition(snow, rain):
    if snow + rain == 0:
        return
    label = wrf_phase_from_rates(snow, rain)
    f = snow / (snow + rain)
    assert (label is PhaseLabel.SOLID) == (f > 0.66)
    assert (label is PhaseLabel.LIQUID) == (f < 0.33)


def test_signal_separation():
    diff, rms = signal_separation([1.0, 2.0], [1.0, 2.0])
    assert np.all(diff == 0) and rms == 0
    diff, rms = signal_separation([0.0, 0.0], [3.0, 4.0])
    assert rms == pytest.approx(math.sqrt(12.5))


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=13), st.randoms())
def test_signal_separation_permutation(values, rnd):
    a = np.array(values)
    b = a[::-1] + 1.0
    perm = list(range(len(a)))
    rnd.shuffle(perm)
    assert signal_separation(a[perm], b[perm])[1] == pytest.approx(signal_separation(a, b)[1])


def test_intensity_bin_means():
    s = [make_sample(i, tb=[200.0 + i, 210.0], n=2, rate=r) for i, r in enumerate((0.5, 0.6, 4.0))]
    means = intensity_bin_means(s)
    liq = means.keys()
    assert len(liq) == 2
    first = next(v for (c, b), v in means.items() if b == 1)
    assert first.tolist() == [200.5, 210.0]
