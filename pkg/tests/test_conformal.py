import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchci import conformal
from sketchci.conformal import (CalibrationQuantile,
                                ConfidenceInterval, calibrate_conditional,
                                calibrate_marginal, calibrate_pairs,
                                calibrate_unique, dump_adaptive_model,
                                dump_quantile, fit_adaptive, load_adaptive_model,
                                load_quantile, make_partition, order_stat_index,
                                predict_lower, predict_two_sided, score_adaptive,
                                score_fixed, score_upper, two_sided_bonferroni)
from sketchci.errors import CalibrationError, ConfigurationError
from sketchci.generators import ZipfSampler
from sketchci.pipeline import (SupervisedPair, WarmupCounts, build_supervised,
                               run_pipeline)
from sketchci.sketch import CountMinSketch


# -- scores ---------------------------------------------------------------

def test_score_fixed_examples():
    assert score_fixed(SupervisedPair("z", 5, 5)) == 0
    assert score_fixed(SupervisedPair("z", 0, 12)) == 12
    with pytest.raises(ValueError):
        score_fixed(SupervisedPair("z", 6, 5))


def test_score_upper_is_count():
    assert score_upper(SupervisedPair("z", 4, 9)) == 4


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 60))
def test_fixed_score_interval_duality(count, extra, threshold):
    # count outside [max(0, bound - t), bound]  <=>  score > t
    bound = count + extra
    score = score_fixed(SupervisedPair("z", count, bound))
    lower = max(0, bound - threshold)
    inside = lower <= count <= bound
    assert inside == (score <= threshold)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 40), st.integers(0, 40))
def test_fixed_interval_nesting(count, extra, t1, t2):
    t1, t2 = min(t1, t2), max(t1, t2)
    bound = count + extra
    lo1, lo2 = max(0, bound - t1), max(0, bound - t2)
    assert lo2 <= lo1  # larger threshold, wider interval


# -- marginal calibration ---------------------------------------------------

def test_order_stat_index_examples():
    assert order_stat_index(4, 0.5) == 3
    assert order_stat_index(99, 0.05) == 95
    assert order_stat_index(5, 0.05) == 6  # overflow -> sentinel upstream
    assert order_stat_index(4, 0.2) == 4  # exact float boundary stays put


def test_calibrate_marginal_examples():
    assert calibrate_marginal([1, 2, 3, 4], 0.5).threshold == 3
    scores = list(range(1, 100))
    assert calibrate_marginal(scores, 0.05).threshold == 95
    q = calibrate_marginal([1, 2, 3, 4, 5], 0.05)
    assert q.is_sentinel and q.threshold is None
    assert q.n_used == 5


def test_calibrate_marginal_errors():
    with pytest.raises(CalibrationError):
        calibrate_marginal([], 0.5)
    with pytest.raises(ConfigurationError):
        calibrate_marginal([1], 0.0)
    with pytest.raises(ConfigurationError):
        calibrate_marginal([1], 1.0)


# -- partitions and conditional calibration ---------------------------------

def test_make_partition_even_split():
    part = make_partition(range(100), 5, upper=200)
    assert part.bins == ((0, 19), (20, 39), (40, 59), (60, 79), (80, 200))
    counts = Counter(part.bin_index(v) for v in range(100))
    assert all(counts[b] == 20 for b in range(5))


def test_make_partition_single_bin():
    part = make_partition([3, 9, 4], 1, upper=50)
    assert part.bins == ((0, 50),)


def test_make_partition_degenerate_values():
    with pytest.warns(UserWarning):
        part = make_partition([7] * 30, 5, upper=40)
    assert part.bins == ((0, 40),)


def test_partition_covers_range():
    part = make_partition([0, 1, 1, 2, 5, 9, 9, 30], 3, upper=60)
    assert part.bins[0][0] == 0 and part.bins[-1][1] == 60
    for lo, hi in part.bins:
        assert lo <= hi
    with pytest.raises(IndexError):
        part.bin_index(61)


def test_calibrate_conditional_single_bin_collapses_to_marginal():
    scores = [4, 1, 9, 2, 2, 7, 5, 3, 8, 6]
    counts = list(range(10))
    part = make_partition(counts, 1, upper=20)
    cond = calibrate_conditional(zip(scores, counts), part, 0.25)
    assert cond.threshold == calibrate_marginal(scores, 0.25).threshold


def test_calibrate_conditional_takes_max_across_bins():
    part = make_partition([0] * 8 + [10] * 8, 2, upper=20)
    assert part.n_bins == 2
    scored = [(3, 0)] * 8 + [(7, 10)] * 8  # quantiles 3 and 7 at alpha=0.5
    q = calibrate_conditional(scored, part, 0.5)
    assert q.threshold == 7


def test_calibrate_conditional_thin_bin_gives_sentinel():
    from sketchci.conformal import FrequencyPartition
    part = FrequencyPartition(((0, 5), (6, 20)))
    scored = [(1, 0)] * 30 + [(0, 10)] * 2
    # the two-point bin cannot reach the 1 - alpha order statistic
    assert calibrate_conditional(scored, part, 0.05).is_sentinel
    with pytest.raises(CalibrationError):
        calibrate_conditional([], part, 0.05)


def test_conditional_never_below_marginal():
    rng = np.random.default_rng(0)
    for trial in range(25):
        counts = rng.integers(0, 40, size=60).tolist()
        scores = rng.integers(0, 15, size=60).tolist()
        part = make_partition(counts, 4, upper=50)
        cond = calibrate_conditional(zip(scores, counts), part, 0.2)
        marg = calibrate_marginal(scores, 0.2)
        if not cond.is_sentinel:
            assert cond.threshold >= marg.threshold


# -- unique-query calibration ------------------------------------------------

def test_calibrate_unique_group_size_one_is_marginal():
    rng = np.random.default_rng(1)
    tokens = [f"t{i}" for i in range(40)]
    scores = rng.integers(0, 30, size=40).tolist()
    uq = calibrate_unique(zip(tokens, scores), 1, 0.1, np.random.default_rng(5))
    assert uq.threshold == calibrate_marginal(scores, 0.1).threshold
    assert uq.n_used == 40


def test_calibrate_unique_whole_set_single_group():
    items = [(f"t{i}", i) for i in range(12)]
    q = calibrate_unique(items, 12, 0.1, np.random.default_rng(0))
    assert q.n_used == 1 and q.is_sentinel


def test_calibrate_unique_errors():
    items = [("a", 1), ("b", 2)]
    with pytest.raises(CalibrationError):
        calibrate_unique(items, 3, 0.1, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        calibrate_unique(items, 0, 0.1, np.random.default_rng(0))


def test_calibrate_unique_duplicate_tokens_counted_once_per_group():
    # one group, one distinct token: its score must come back
    items = [("same", 9)] * 6
    q = calibrate_unique(items, 6, 0.4, np.random.default_rng(3))
    assert q.threshold == 9 or q.is_sentinel  # index ceil(.6*2)=2 > 1 -> sentinel
    assert q.is_sentinel  # G=1 degenerates regardless of the token pool


def test_calibrate_unique_distribution_matches_subset_marginal():
    # with all-distinct tokens, the representatives are a uniform
    # without-replacement subset, so the threshold law must match the
    # marginal rule applied to a random size-G subset
    rng_scores = np.random.default_rng(7)
    scores = rng_scores.integers(0, 100, size=60).tolist()
    items = [(f"t{i}", s) for i, s in enumerate(scores)]
    m_prime, alpha = 5, 0.2
    g = 60 // m_prime
    k = order_stat_index(g, alpha)

    trials = 4000
    rng_a = np.random.default_rng(11)
    got = []
    for _ in range(trials):
        q = calibrate_unique(items, m_prime, alpha, rng_a)
        got.append(-1 if q.is_sentinel else q.threshold)
    rng_b = np.random.default_rng(13)
    want = []
    for _ in range(trials):
        sub = rng_b.choice(scores, size=g, replace=False)
        want.append(int(np.sort(sub)[k - 1]))

    values = sorted(set(got) | set(want))
    for v in values:
        f_got = got.count(v) / trials
        f_want = want.count(v) / trials
        pooled = (got.count(v) + want.count(v)) / (2 * trials)
        se = math.sqrt(max(pooled * (1 - pooled), 1e-9) * 2 / trials)
        assert abs(f_got - f_want) <= 4 * se, (v, f_got, f_want)


# -- adaptive model -----------------------------------------------------------

def _pairs_from(bounds, counts):
    return [SupervisedPair(i, c, b) for i, (b, c) in enumerate(zip(bounds, counts))]


def test_fit_adaptive_zero_errors():
    pairs = _pairs_from([5, 9, 2, 7], [5, 9, 2, 7])
    model = fit_adaptive(pairs, grid_size=10, bound_bins=2, m_cap=100)
    assert (model.table[:, :-1] == 0).all()
    assert (model.table[:, -1] == 100).all()
    assert score_adaptive(model, SupervisedPair("q", 4, 4)) == 0


def test_fit_adaptive_single_bin_quantiles():
    # errors 0..99 in one bin on a 101-point grid: interior level t is the
    # inf{x : F(x) >= alpha_t} order statistic of the errors
    from fractions import Fraction
    pairs = _pairs_from([100 + e for e in range(100)], [100] * 100)
    model = fit_adaptive(pairs, grid_size=101, bound_bins=1, m_cap=200)
    errors = sorted(p.bound - p.count for p in pairs)
    for t in range(1, 100):
        k = math.ceil(Fraction(float(model.alphas[t])) * 100)
        assert model.table[0, t] == errors[k - 1]
    assert model.table[0, 50] == 49  # the exact-0.5 level is the lower median


def test_fit_adaptive_monotone_in_both_axes():
    rng = np.random.default_rng(2)
    bounds = rng.integers(0, 200, size=500)
    counts = [int(b * rng.random()) for b in bounds]
    model = fit_adaptive(_pairs_from(bounds, counts), grid_size=25,
                         bound_bins=6, m_cap=500)
    assert (np.diff(model.table, axis=1) >= -1e-9).all()  # in t
    assert (np.diff(model.table, axis=0) >= -1e-9).all()  # across bound bins


def test_fit_adaptive_empty_training_rejected():
    with pytest.raises(ConfigurationError):
        fit_adaptive([], m_cap=10)


def test_score_adaptive_boundaries_and_monotonicity():
    rng = np.random.default_rng(4)
    bounds = rng.integers(1, 60, size=300)
    counts = [int(b * rng.random()) for b in bounds]
    model = fit_adaptive(_pairs_from(bounds, counts), grid_size=40,
                         bound_bins=5, m_cap=60)
    assert score_adaptive(model, SupervisedPair("q", 17, 17)) == 0
    assert score_adaptive(model, SupervisedPair("q", 0, 60)) == model.grid_size - 1
    for bound in (3, 21, 55):
        scores = [score_adaptive(model, SupervisedPair("q", c, bound))
                  for c in range(bound + 1)]
        assert scores == sorted(scores, reverse=True)  # non-increasing in count


def test_adaptive_score_interval_duality():
    rng = np.random.default_rng(6)
    bounds = rng.integers(1, 80, size=400)
    counts = [int(b * rng.random()) for b in bounds]
    model = fit_adaptive(_pairs_from(bounds, counts), grid_size=30,
                         bound_bins=4, m_cap=80)
    for _ in range(300):
        bound = int(rng.integers(1, 80))
        count = int(rng.integers(0, bound + 1))
        t = int(rng.integers(0, 30))
        score = score_adaptive(model, SupervisedPair("q", count, bound))
        lower = max(0, math.ceil(bound - model.quantile(t, bound)))
        assert (lower <= count) == (score <= t)


# -- interval prediction -------------------------------------------------------

def _small_session():
    sk = CountMinSketch("cms", 2, 1 << 14, seed=0)
    for _ in range(10):
        sk.update("z")
    sk.update("other")
    sk.freeze()
    warm = WarmupCounts({"z": 2}, 2)
    return sk, warm


def test_predict_lower_fixed_worked_example():
    sk, warm = _small_session()
    q = CalibrationQuantile(3, 10, 0.1, "fixed")
    iv = predict_lower("z", sk, warm, q)
    assert (iv.lower, iv.upper) == (9, 12)  # bound 10, offset 2, threshold 3


def test_predict_lower_zero_threshold_collapses():
    sk, warm = _small_session()
    iv = predict_lower("z", sk, warm, CalibrationQuantile(0, 10, 0.1, "fixed"))
    assert iv.lower == iv.upper == 12


def test_predict_lower_sentinel_trivial():
    sk, warm = _small_session()
    iv = predict_lower("z", sk, warm, CalibrationQuantile(None, 3, 0.05, "fixed"))
    assert (iv.lower, iv.upper) == (2, 12)


def test_predict_lower_kind_mismatch():
    sk, warm = _small_session()
    q = CalibrationQuantile(3, 10, 0.1, "fixed")
    with pytest.raises(ConfigurationError):
        predict_lower("z", sk, warm, q, score_kind="adaptive")
    q_ad = CalibrationQuantile(3, 10, 0.1, "adaptive")
    with pytest.raises(ConfigurationError):
        predict_lower("z", sk, warm, q_ad)  # adaptive without model


def test_two_sided_degenerate_thresholds_clamp():
    sk, warm = _small_session()
    iv = predict_two_sided("z", sk, warm,
                           CalibrationQuantile(0, 9, 0.05, "fixed"),
                           CalibrationQuantile(0, 9, 0.05, "fixed"))
    assert iv.lower == iv.upper == 2  # clamped to the upper end


def test_two_sided_bonferroni_on_pipeline():
    rng = np.random.default_rng(8)
    stream = ZipfSampler(1.7).sample_n(rng, 6000)
    res = run_pipeline(stream, 600, CountMinSketch("cmscu", 3, 128, seed=1))
    pairs = build_supervised(res.warmup, res.tracked, res.sketch)
    lower_scores = [score_fixed(p) for p in pairs]
    upper_scores = [score_upper(p) for p in pairs]

    shadow = Counter(stream)
    queries = ZipfSampler(1.7).sample_n(np.random.default_rng(9), 2000)
    hits = 0
    cache = {}
    for token in queries:
        if token not in cache:
            cache[token] = two_sided_bonferroni(token, res.sketch, res.warmup,
                                                lower_scores, upper_scores, 0.10)
        iv = cache[token]
        assert iv.lower <= iv.upper
        hits += iv.covers(shadow[token])
    coverage = hits / len(queries)
    se = math.sqrt(0.9 * 0.1 / len(queries))
    assert coverage >= 0.90 - 3 * se


# -- orchestration --------------------------------------------------------------

def test_calibrate_pairs_requires_rng_when_randomized():
    pairs = _pairs_from([5, 6, 7, 8], [1, 2, 3, 4])
    with pytest.raises(ConfigurationError):
        calibrate_pairs(pairs, 0.2, regime="unique", m_prime=2)
    res = calibrate_pairs(pairs, 0.2)  # fixed marginal consumes none
    assert res.quantile.n_used == 4


def test_calibrate_pairs_two_sided_levels():
    pairs = _pairs_from(list(range(10, 50)), [0] * 40)
    res = calibrate_pairs(pairs, 0.2, two_sided=True)
    assert res.quantile.alpha == pytest.approx(0.1)
    assert res.upper_quantile is not None
    assert res.upper_quantile.threshold == 0  # all counts are zero


# -- sidecar serialization -------------------------------------------------------

def test_quantile_sidecar_roundtrip():
    for q in (CalibrationQuantile(17, 100, 0.05, "fixed"),
              CalibrationQuantile(None, 3, 0.5, "adaptive"),
              CalibrationQuantile(0, 1, 0.25, "fixed")):
        back = load_quantile(dump_quantile(q))
        assert back == q
    with pytest.raises(ConfigurationError):
        load_quantile(b"XXXX" + bytes(30))


def test_adaptive_model_sidecar_roundtrip():
    rng = np.random.default_rng(10)
    bounds = rng.integers(1, 90, size=200)
    counts = [int(b * rng.random()) for b in bounds]
    model = fit_adaptive(_pairs_from(bounds, counts), grid_size=20,
                         bound_bins=4, m_cap=90)
    back = load_adaptive_model(dump_adaptive_model(model))
    assert back.m_cap == model.m_cap
    assert np.array_equal(back.alphas, model.alphas)
    assert np.array_equal(back.cuts, model.cuts)
    assert np.array_equal(back.table, model.table)
    pair = SupervisedPair("q", 3, 40)
    assert score_adaptive(back, pair) == score_adaptive(model, pair)
